from .lemma_checks import *  # NOQA

# fmt: off
__version__ = '0.1.0.dev0'
# fmt: on
