"""Workbench for adversarial robustness of approximate spiking neural networks."""
from .approx import AxNetwork, approximate, build_axsnn, compute_ath, sort_weights
from .aqf import AqfParams, aqf_filter, aqf_oracle
from .attacks import AttackConfig, bim, frame_attack, pgd, sparse_attack
from .codec import EventStream, rasterize, rate_encode, synth_gesture, synth_images
from .harness import SweepConfig, evaluate_config, robustness, sweep
from .precision import QuantScheme, precision_scale, quant_error_bound
from .snn import LifParams, Network, forward, lif_step, spike_probability
from .train import TrainConfig, check_quality, input_gradient, train_accurate

__version__ = "0.1.0"
