from .audio import Spectrogram, audio_features, chroma, mel_spectrogram, mfcc, stft
from .emotion import EMOTIONS, load_emotion_features
from .saliency import METRIC_NAMES, SaliencyPair, saliency_metrics

__all__ = [
    "Spectrogram", "audio_features", "chroma", "mel_spectrogram", "mfcc", "stft",
    "EMOTIONS", "load_emotion_features",
    "METRIC_NAMES", "SaliencyPair", "saliency_metrics",
]
