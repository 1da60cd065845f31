"""Off-core toolkit for the flow-matching pipeline.

Exports pretrained-backbone feature maps into FTC1 containers and renders
figures (trajectory plots, norm-vs-step curves, anomaly heatmaps) from the
core pipeline's CSV and container outputs. Talks to the core strictly
through those file formats.
"""

__version__ = "0.1.0"
