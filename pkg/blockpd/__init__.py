__version__ = "0.1.0"

import logging

from .utils import *
from .projection import *
from .problem import *
from .agents import *
from .reference import *
from .results import *
from .simulator import *
from .netflow import *

logging.getLogger(__name__).addHandler(logging.NullHandler())
