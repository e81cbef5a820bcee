"""Semi-supervised relation classification by gradient imitation."""

__version__ = "0.1.0"

from .data import Corpus, LabelInventory, RelationMention, SplitSpec, read_corpus, stratified_split, write_corpus
from .estimators import GradLREClassifier, RelationEncoder
from .exceptions import GradLREError
from .girl import GirlConfig, train, train_self_training_ablation
from .synthetic import generate_synthetic

__all__ = [
    "Corpus", "GirlConfig", "GradLREClassifier", "GradLREError", "LabelInventory",
    "RelationEncoder", "RelationMention", "SplitSpec", "generate_synthetic", "read_corpus",
    "stratified_split", "train", "train_self_training_ablation", "write_corpus",
]
