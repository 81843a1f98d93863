import logging

from app.tensor import set_default_dtype


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


class Precision:
    """Binds the tensor engine's default dtype to the app's PRECISION setting."""

    def __init__(self, app=None):
        self.precision = None
        if app is not None:
            self.init_app(app)

    def init_app(self, app):
        self.apply(app.config["PRECISION"])
        app.extensions["precision"] = self

    def apply(self, precision):
        set_default_dtype(precision)
        self.precision = precision


class Threads:
    """Records the intra-op thread cap; run.py exports it before numpy loads."""

    def __init__(self, app=None):
        self.limit = None
        if app is not None:
            self.init_app(app)

    def init_app(self, app):
        value = app.config.get("THREADS")
        self.limit = int(value) if value else None
        if self.limit:
            logger.info(f"Intra-op threads capped at {self.limit}")
        app.extensions["threads"] = self


precision = Precision()
threads = Threads()
