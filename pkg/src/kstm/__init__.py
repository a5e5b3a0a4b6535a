"""Short text matching with contrastive complement sentences and keyword knowledge graphs."""

from .autodiff import AdamW, Tensor, backward, no_grad
from .kernels import BACKEND as KERNEL_BACKEND
from .keywords import extract_keyword, textrank_scores
from .knowledge import LexicalStore, build_graph, load_store, retrieve_topk
from .model import KSTM
from .objectives import ConfusionMatrix, LossConfig, info_nce, metrics
from .pipeline import RunConfig, SentencePair, evaluate, load_dataset, train
from .text import Vocabulary, build_vocab, encode_ids, tokenize

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ConfusionMatrix",
    "KERNEL_BACKEND",
    "KSTM",
    "LexicalStore",
    "LossConfig",
    "RunConfig",
    "SentencePair",
    "Tensor",
    "Vocabulary",
    "backward",
    "build_graph",
    "build_vocab",
    "encode_ids",
    "evaluate",
    "extract_keyword",
    "info_nce",
    "load_dataset",
    "load_store",
    "metrics",
    "no_grad",
    "retrieve_topk",
    "textrank_scores",
    "tokenize",
    "train",
]
