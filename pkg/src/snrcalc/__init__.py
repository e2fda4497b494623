"""snrcalc: statistical end-to-end bounds for multi-hop fading channels.

Traffic and service processes are mapped to an exponential (SNR) domain where
multi-hop composition becomes a (min,x) convolution; Mellin-transform bounds
of the composed processes then yield backlog, delay, and output-burstiness
quantiles, which a built-in Monte-Carlo tandem simulator can validate.
"""

from .bounds import (BoundResult, NetworkSpec, backlog_bound, cascade_mellin,
                     delay_bound, delay_violation_ln, kernel_V,
                     leftover_service, leftover_service_model,
                     min_stability_kernel, m_kernel, optimize_s, output_bound)
from .errors import (ConfigError, DimensionError, DomainError,
                     PreconditionError, SnrCalcError, TraceError)
from .fading import (ChannelSpec, FadingModel, FADING_MODELS, RAYLEIGH,
                     mean_capacity_nats, rayleigh_g_mellin,
                     rayleigh_g_mellin_ln, rayleigh_service_mellin,
                     rayleigh_service_model, sample_gamma,
                     upper_incomplete_gamma, upper_incomplete_gamma_ln)
from .mellin import (CascadeBinomial, IidSlotPower, MellinModel, SigmaRho,
                     Tabulated, conv_bound, deconv_bound, mellin_constant,
                     mellin_product, mellin_quotient, moment_bound)
from .processes import (BitProcess, DelaySample, SnrProcess, aggregate_snr,
                        backlog_of, delay_of, minplus_convolve, mx_convolve,
                        mx_deconvolve, null_process, pointwise_min, to_bit,
                        to_snr, unity_process)
from .simulate import (SimConfig, SimOutcome, ViolationEstimate,
                       empirical_violation, replication_seed, run_tandem,
                       source_increments, write_trace_csv)
from .traffic import (NATS_PER_BIT, TrafficSpec, UnitContext,
                      aggregate_traffic, to_external, to_internal,
                      traffic_mellin, traffic_model)

__version__ = "0.1.0"
