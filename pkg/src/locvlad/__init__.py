"""Location-aware VLAD embeddings for landmark retrieval."""

from .embedding import EncodingConfig, VladVector, encode_vlad, loc_vlad, load_embeddings, save_embeddings
from .errors import DomainError, FormatError, LocVladError, TruncationError, ValidationError
from .evaluation import (
    GroundTruth,
    MetricsReport,
    average_precision,
    evaluate,
    mean_average_precision,
    recall5_at_top5,
    top1_accuracy,
)
from .features import FeatureSet, central_crop_filter, load_features, root_sift, save_features
from .retrieval import RankedList, RetrievalIndex, build_index, query_index
from .vocabulary import KMeansParams, Vocabulary, assign, subsample_descriptors, train_kmeans_pp

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EncodingConfig",
    "FeatureSet",
    "FormatError",
    "GroundTruth",
    "KMeansParams",
    "LocVladError",
    "MetricsReport",
    "RankedList",
    "RetrievalIndex",
    "TruncationError",
    "ValidationError",
    "VladVector",
    "Vocabulary",
    "assign",
    "average_precision",
    "build_index",
    "central_crop_filter",
    "encode_vlad",
    "evaluate",
    "load_embeddings",
    "load_features",
    "loc_vlad",
    "mean_average_precision",
    "query_index",
    "recall5_at_top5",
    "root_sift",
    "save_embeddings",
    "save_features",
    "subsample_descriptors",
    "top1_accuracy",
    "train_kmeans_pp",
]
