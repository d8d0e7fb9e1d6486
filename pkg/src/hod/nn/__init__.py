from .gradcheck import gradient_check
from .lstm import LSTMModel, lstm_forward
from .tdnn import DenseLayer, TDNNModel, tdnn_forward
from .train import TrainConfig, TrainingDiverged, TrainResult, train

__all__ = [
    "DenseLayer", "LSTMModel", "TDNNModel", "TrainConfig", "TrainResult",
    "TrainingDiverged", "gradient_check", "lstm_forward", "tdnn_forward", "train",
]
