import os

# fixed single-threaded BLAS keeps runs reproducible and is faster for the
# thin matrix shapes this code produces
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
