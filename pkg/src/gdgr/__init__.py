from gdgr.kernels import BACKEND
