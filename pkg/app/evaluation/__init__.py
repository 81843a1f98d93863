from flask import Blueprint

evaluation = Blueprint("evaluation", __name__, cli_group=None)

from app.evaluation import commands
