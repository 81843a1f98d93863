import os

THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

if os.environ.get("DOMIX_THREADS"):
    for name in THREAD_VARIABLES:
        os.environ[name] = os.environ["DOMIX_THREADS"]

from flask.cli import FlaskGroup

from app import create_app


cli = FlaskGroup(create_app=create_app, add_default_commands=False)

if __name__ == "__main__":
    cli()
