__version__ = "0.1.0"
__author__ = "condenserec contributors"
__url__ = "https://github.com/condenserec/condenserec"

from .base import (  # noqa: E402
    ClickHistory as ClickHistory,
    CondenseConfig as CondenseConfig,
    Dataset as Dataset,
    EvoConfig as EvoConfig,
    Impression as Impression,
    Item as Item,
    TrainConfig as TrainConfig,
)
from .pipeline import CondensePipeline as CondensePipeline  # noqa: E402
