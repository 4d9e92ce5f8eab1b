"""Loss, gradients, optimizer and the training protocol."""
from .adadelta import AdadeltaState, adadelta_update
from .bptt import Batch, backward, batch_loss, forward_backward, make_batch, sentence_loss
from .loop import TrainingConfig, TrainResult, corpus_bleu, train
from .search import SEARCH_RANGES, random_search, sample_hyperparams, scale_ranges

__all__ = [
    "AdadeltaState", "adadelta_update", "Batch", "backward", "batch_loss", "forward_backward",
    "make_batch", "sentence_loss", "TrainingConfig", "TrainResult", "corpus_bleu", "train",
    "SEARCH_RANGES", "random_search", "sample_hyperparams", "scale_ranges",
]
