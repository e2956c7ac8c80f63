from .audio import encode_wav, extract_audio
from .decoders import (
    FFmpegDecoder,
    MediaDecoder,
    SyntheticDecoder,
    decoder_from_spec,
    find_ffmpeg,
    parse_synthetic_locator,
)
from .frames import compose_mosaics, extract_frames, overlay_index, probe_video, resized_dims
from .sampling import allocate_across_ranges, sample_across_ranges, uniform_sample_indices
from .types import (
    ALLOWED_SHORT_EDGES,
    AUDIO_SIZE_CAP,
    AudioSegment,
    DecodeError,
    FrameImage,
    FrameRange,
    MediaError,
    MosaicGrid,
    NoAudioTrack,
    NoVideoTrack,
    VideoHandle,
    ranges_contain,
)
