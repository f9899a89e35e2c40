import os

# On small VMs OpenBLAS spin-waiting across threads slows the many small
# matmuls of the LSTM down by ~2x; pin to one thread before numpy loads.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
