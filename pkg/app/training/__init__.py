from flask import Blueprint

training = Blueprint("training", __name__, cli_group=None)

from app.training import commands
