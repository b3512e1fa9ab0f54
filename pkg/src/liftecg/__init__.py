"""liftecg: learnable lifting-wavelet reconstruction of ECG from radar
chest-displacement signals, with training, evaluation and vitals estimation.
"""

from .autodiff import Tensor, Param, check_gradients
from .model import (ModelConfig, LiftingNetwork, count_params_flops,
                    export_intermediate_features, model_gradient_check)
from .stft import LossConfig, SpectrogramSet, hanning, mr_stft_loss
from .training import TrainConfig, TrainLog, train, evaluate, total_loss
from .checkpoint import save_checkpoint, load_checkpoint
from .data import (Recording, SignalChunk, SynthParams, resample, segment,
                   normalize_chunk, synthesize_pair, load_dataset)
from .metrics import (EvalReport, RPeakSeries, VitalsPair, pearson, mre,
                      detect_r_peaks, heart_rate, rmssd, vitals_mae)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "Param", "check_gradients",
    "ModelConfig", "LiftingNetwork", "count_params_flops",
    "export_intermediate_features", "model_gradient_check",
    "LossConfig", "SpectrogramSet", "hanning", "mr_stft_loss",
    "TrainConfig", "TrainLog", "train", "evaluate", "total_loss",
    "save_checkpoint", "load_checkpoint",
    "Recording", "SignalChunk", "SynthParams", "resample", "segment",
    "normalize_chunk", "synthesize_pair", "load_dataset",
    "EvalReport", "RPeakSeries", "VitalsPair", "pearson", "mre",
    "detect_r_peaks", "heart_rate", "rmssd", "vitals_mae",
]
