"""Joint detection, tracking and UAV path planning for radio-tagged objects.

Pipeline: synthesize the baseband signal received from pulsed transmitters,
convert it to spectrogram measurements, run a jump-Markov labeled
multi-Bernoulli track-before-detect particle filter on the raw magnitudes,
and steer the receiver with a divergence-reward planner under a
void-probability safety constraint.
"""

__version__ = "0.1.0"

from tagtrack.kernels import USING_COMPILED

__all__ = ["USING_COMPILED", "__version__"]
