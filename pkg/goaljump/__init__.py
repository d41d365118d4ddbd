from .base import GoalJump
from .config import Config, load_config
