"""Fully-fused small MLPs: bf16 fused engine, f32/bf16 references, roofline model."""
from fusedmlp.numeric import (PackedWeights, ShapeError, StateError, bf16_to_f32, f32_to_bf16,
                              gemm_bf16_f32, gemm_f32, pack_weights, round_bf16, unpack_weights)
from fusedmlp.model import (Activation, MlpConfig, MlpParams, Precision, backward_reference,
                            forward_reference, init_params, loss_l2, train_step_reference)
from fusedmlp.fused import (FusedEngine, PaddingReport, TileConfig, fused_inference, fused_train,
                            grad_gemm_pass, pad_batch)
from fusedmlp.encoding import HashGridConfig, HashGridParams, hash_grid_backward, hash_grid_forward
from fusedmlp.checkpoint import Checkpoint, CheckpointError, checkpoint_load, checkpoint_save
from fusedmlp.optim import OptimizerState, optimizer_step

__version__ = "0.1.0"
