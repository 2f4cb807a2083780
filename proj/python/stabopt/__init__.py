from ._stabopt import *
