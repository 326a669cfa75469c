"""fraudseq: time-attention recurrent pooling for fraud transaction
scoring over irregular event streams, with phased/time LSTM baselines,
GBDT leaf embeddings, a heterogeneous fusion classifier, a synthetic
stream generator, and an evaluation harness (AUC, F1, RATP@r)."""

from .attention import (
    AttentionParams,
    TimeEmbeddingTable,
    bucketize,
    deltas,
    self_attention_pool,
    time_attention_pool,
    time_embed,
)
from .cells import (
    CellState,
    GruParams,
    LstmParams,
    PhasedGateParams,
    TimeLstmParams,
    bi_encode_sequence,
    encode_sequence,
    gru_step,
    lstm_step,
    phased_gate,
    phased_lstm_step,
    time_lstm_step,
)
from .datagen import (
    DatasetSplit,
    GenConfig,
    LabeledInstance,
    downsample_negatives,
    generate,
    temporal_split,
    truncate_streams,
)
from .fusion import BatchNormParams, FusionModel, ModelConfig, batch_norm_forward
from .metrics import auc, best_f1_threshold, f1, ratp
from .numeric import (
    ParamStore,
    activation,
    finite_diff_check,
    matmul,
    sigmoid,
    softmax,
)
from .training import DataCache, MetricsReport, TrainConfig, sgd_step, train
from .trees import TreeEnsemble, fit_gbdt, gbdt_score, leaf_embedding

__version__ = "0.1.0"
