"""Any-to-any voice conversion: ASR content + F0 features into a speaker-conditioned waveform GAN."""

from hifivc.audio import MelConfig, MelSpectrogram, Waveform, load_audio, mel_spectrogram, save_audio
from hifivc.config import LossWeights, RunConfig, TrainConfig
from hifivc.content import ContentFeatures, ToyEncoder, align_features, extract_content, toy_encode
from hifivc.f0 import F0Features, F0Track, NormalizedF0, encode_f0, extract_f0, normalize_f0
from hifivc.metrics import cer, pcc, wer
from hifivc.objectives import (
    Checkpoint, Trainer, adv_disc_loss, adv_gen_loss, fm_loss, learning_rate, rec_loss,
    total_predictor_loss, train_loop,
)
from hifivc.pipeline import Manifest, VoiceConverter, convert, evaluate, make_split
from hifivc.speaker import SpeakerPosterior, embed_speaker, kl_loss, sample_embedding

__version__ = "0.1.0"
