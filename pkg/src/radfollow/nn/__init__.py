"""Small numpy neural kernel: cells, attention, losses and optimisers."""
from .attention import attention_pool, attention_pool_backward
from .functional import (
    dense_backward,
    dense_forward,
    dropout,
    dropout_backward,
    log_softmax,
    sigmoid,
    softmax,
    softmax_xent,
)
from .params import (
    Adam,
    AdamConfig,
    ParamSet,
    SGD,
    adam_step,
    init_attention,
    init_bidi,
    init_cell,
    init_dense,
    load_tensors,
    make_optimizer,
    save_tensors,
    tensors_from_json,
    tensors_to_json,
)
from .recurrent import (
    GRU,
    LSTM,
    bidi_encode,
    bidi_encode_backward,
    gru_step,
    gru_step_backward,
    lstm_step,
    lstm_step_backward,
    run_rnn,
    run_rnn_backward,
)

__all__ = [
    "Adam", "AdamConfig", "GRU", "LSTM", "ParamSet", "SGD",
    "adam_step", "attention_pool", "attention_pool_backward",
    "bidi_encode", "bidi_encode_backward", "dense_backward", "dense_forward",
    "dropout", "dropout_backward", "gru_step", "gru_step_backward",
    "init_attention", "init_bidi", "init_cell", "init_dense",
    "load_tensors", "log_softmax", "lstm_step", "lstm_step_backward",
    "make_optimizer", "run_rnn", "run_rnn_backward", "save_tensors",
    "sigmoid", "softmax", "softmax_xent", "tensors_from_json", "tensors_to_json",
]
