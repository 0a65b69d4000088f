"""glint: neural global illumination for variable scenes, trained with MCMC
active exploration of the scene-parameter hypercube."""

from .scene import (SceneSpace, SceneVector, ParamSpec, CameraSpec, SceneInstance,
                    builtin, instantiate, load_space, normalize, denormalize,
                    resolve_space, save_space)
from .tracer import PatchWindow, GBufferPatch, RadiancePatch, gbuffer_patch, \
    trace_patch, render_image
from .net import (PixelGenerator, AdamState, LossValue, adam_step, loss,
                  loss_and_grad, step_norm_for_patch, save_checkpoint,
                  load_checkpoint)
from .explore import (ChainState, ProposalConfig, TargetValue, accept,
                      chain_step, init_chains, propose)
from .reuse import (ReuseTracker, SampleStore, StoredSample, decide,
                    record_new, record_reused, reuse_probability,
                    sample_replay_batch)
from .train import Schedule, TrainConfig, Trainer, resolution, train_run, validate
from .metrics import MetricReport, chain_histogram, compare_runs, mae, mape

__version__ = "0.1.0"
