from flask import Flask

from app import events
from app.extensions import precision, threads
from config import Config


def create_app(config_class=Config):
    app = Flask(__name__)
    app.config.from_object(config_class)

    precision.init_app(app)
    threads.init_app(app)

    from app.corpus import corpus as corpus_bp
    app.register_blueprint(corpus_bp)

    from app.training import training as training_bp
    app.register_blueprint(training_bp)

    from app.evaluation import evaluation as evaluation_bp
    app.register_blueprint(evaluation_bp)

    return app
