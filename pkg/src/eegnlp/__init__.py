"""EEG band-power and sentence-complexity features for comprehension
classification, plus the evaluation harness around them."""

__version__ = "0.1.0"
