from .model_manager import ModelManager
from .pipeline import RecordingClassifier
