from .version import __version__, __versiondate__
from .config import *
from .base import *
from .catalog import *
from .series import *
from .drifted import *
from .functionals import *
from .levy import *
from .sampling import *
logger.debug('Finished imports')
