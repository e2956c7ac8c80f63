from __future__ import annotations

import math
from functools import lru_cache
from typing import List, Sequence

import cv2
import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .decoders import FFmpegDecoder, MediaDecoder
from .types import ALLOWED_SHORT_EDGES, FrameImage, MosaicGrid, VideoHandle

MOSAIC_COLUMNS = 3
MOSAIC_ROWS = 2
MOSAIC_SIZE = MOSAIC_COLUMNS * MOSAIC_ROWS
LABEL_HEIGHT_FRACTION = 0.08
LABEL_OUTLINE_PX = 2


def probe_video(path: str, decoder: MediaDecoder = None) -> VideoHandle:
    return (decoder or FFmpegDecoder()).probe(path)


def resized_dims(width: int, height: int, short_edge: int) -> tuple:
    """Scale so min(width, height) == short_edge; the long edge rounds half up."""
    if width <= height:
        return short_edge, (2 * height * short_edge + width) // (2 * width)
    return (2 * width * short_edge + height) // (2 * height), short_edge


def extract_frames(
    handle: VideoHandle,
    indices: Sequence[int],
    short_edge: int,
    decoder: MediaDecoder,
) -> List[FrameImage]:
    if short_edge not in ALLOWED_SHORT_EDGES:
        raise ValueError(f"unsupported short_edge value: {short_edge}")
    for idx in indices:
        if not 0 <= idx < handle.total_frames:
            raise ValueError(f"frame index {idx} outside video of {handle.total_frames} frames")
    frames = []
    for idx, rgb in zip(indices, decoder.read_frames(handle.path, indices)):
        h, w = rgb.shape[:2]
        size = resized_dims(w, h, short_edge)
        if size != (w, h):
            # area averaging when shrinking, bilinear when enlarging
            interp = cv2.INTER_AREA if size[0] < w else cv2.INTER_LINEAR
            rgb = cv2.resize(rgb, size, interpolation=interp)
        img = Image.fromarray(np.ascontiguousarray(rgb), mode="RGB")
        frames.append(FrameImage(global_index=idx, pixels=img, short_edge_px=short_edge))
    return frames


@lru_cache(maxsize=8)
def _label_font(px: int) -> ImageFont.ImageFont:
    return ImageFont.load_default(size=px)


@lru_cache(maxsize=8192)
def _label_masks(text: str, px: int) -> tuple:
    """Outline and fill coverage masks for one label, rendered once and reused."""
    font = _label_font(px)
    left, top, right, bottom = font.getbbox(text, stroke_width=LABEL_OUTLINE_PX)
    size = (right - left + 1, bottom - top + 1)
    origin = (-left, -top)
    outline = Image.new("L", size, 0)
    ImageDraw.Draw(outline).text(origin, text, fill=255, font=font, stroke_width=LABEL_OUTLINE_PX, stroke_fill=255)
    fill = Image.new("L", size, 0)
    ImageDraw.Draw(fill).text(origin, text, fill=255, font=font)
    return outline, fill, (left, top)


def overlay_index(frame: FrameImage, in_place: bool = False) -> FrameImage:
    """Stamp the global frame index in white (black outline) at the top-left.

    Works on a copy unless ``in_place`` (for callers that own a freshly decoded
    frame). Stamping twice draws two labels, so callers stamp once.
    """
    img = frame.pixels if in_place else frame.pixels.copy()
    text = str(frame.global_index)
    px = max(8, round(LABEL_HEIGHT_FRACTION * frame.short_edge_px))
    outline, fill, (left, top) = _label_masks(text, px)
    at = (LABEL_OUTLINE_PX + 2 + left, LABEL_OUTLINE_PX + top)
    img.paste((0, 0, 0), at + (at[0] + outline.width, at[1] + outline.height), outline)
    img.paste((255, 255, 255), at + (at[0] + fill.width, at[1] + fill.height), fill)
    return FrameImage(frame.global_index, img, frame.short_edge_px, label=text)


def compose_mosaics(frames: Sequence[FrameImage]) -> List[MosaicGrid]:
    """Pack frames six at a time into 3x2 row-major grids on a black canvas."""
    if not frames:
        raise ValueError("no frames to compose")
    cell_w = max(f.pixels.width for f in frames)
    cell_h = max(f.pixels.height for f in frames)
    grids = []
    for g in range(math.ceil(len(frames) / MOSAIC_SIZE)):
        batch = list(frames[g * MOSAIC_SIZE:(g + 1) * MOSAIC_SIZE])
        canvas = Image.new("RGB", (cell_w * MOSAIC_COLUMNS, cell_h * MOSAIC_ROWS))
        for slot, frame in enumerate(batch):
            row, col = divmod(slot, MOSAIC_COLUMNS)
            canvas.paste(frame.pixels, (col * cell_w, row * cell_h))
        grids.append(MosaicGrid(image=canvas, members=batch))
    return grids
