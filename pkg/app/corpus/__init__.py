from flask import Blueprint

corpus = Blueprint("corpus", __name__, cli_group=None)

from app.corpus import commands
