"""Formula rendering behind a pluggable command contract.

A renderer is either the built-in ``"stub"`` rasterizer or a shell command
template containing ``{latex_file} {out_png} {dpi} {font}``; exit status 0
means success.  Whatever the renderer produces is post-processed the same
way: tight crop of the ink, fixed white margin, saved as an RGB PNG.
"""

from __future__ import annotations

import logging
import shlex
import shutil
import subprocess
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from mathrec.data import stub_render
from mathrec.errors import CompileFailure, RendererUnavailable

logger = logging.getLogger(__name__)

STUB = "stub"
MARGIN = 8
INK_THRESHOLD = 250
TEMPLATE_FIELDS = ("{latex_file}", "{out_png}", "{dpi}", "{font}")


def check_renderer(renderer: str) -> None:
    """Fail fast with :class:`RendererUnavailable` if ``renderer`` cannot run."""
    if renderer == STUB:
        stub_render.font_path(stub_render.DEFAULT_FONT)
        return
    missing = [f for f in TEMPLATE_FIELDS if f not in renderer]
    if missing:
        raise RendererUnavailable(
            f"renderer template {renderer!r} lacks placeholders {', '.join(missing)}")
    argv = shlex.split(renderer)
    if not argv or shutil.which(argv[0]) is None:
        raise RendererUnavailable(f"renderer command not found: {renderer!r}")


def trim_and_pad(image: Image.Image, margin: int = MARGIN) -> Image.Image:
    gray = np.asarray(image.convert("L"))
    ink = np.argwhere(gray < INK_THRESHOLD)
    if ink.size == 0:
        raise CompileFailure("renderer produced an empty image")
    (top, left), (bottom, right) = ink.min(0), ink.max(0) + 1
    crop = gray[top:bottom, left:right]
    out = np.full((crop.shape[0] + 2 * margin, crop.shape[1] + 2 * margin), 255, np.uint8)
    out[margin : margin + crop.shape[0], margin : margin + crop.shape[1]] = crop
    return Image.fromarray(out, mode="L").convert("RGB")


def _run_command(renderer: str, latex: str, font: str, dpi: int) -> Image.Image:
    with tempfile.TemporaryDirectory(prefix="mathrec-render-") as tmp:
        latex_file = Path(tmp) / "formula.tex"
        out_png = Path(tmp) / "formula.png"
        latex_file.write_text(latex + "\n", encoding="utf-8")
        command = renderer.format(latex_file=shlex.quote(str(latex_file)),
                                  out_png=shlex.quote(str(out_png)), dpi=dpi,
                                  font=shlex.quote(font))
        try:
            proc = subprocess.run(shlex.split(command), capture_output=True, text=True)
        except FileNotFoundError as exc:
            raise RendererUnavailable(f"renderer command not found: {renderer!r}") from exc
        if proc.returncode != 0 or not out_png.exists():
            raise CompileFailure(
                f"renderer exited {proc.returncode}: {proc.stderr.strip()[-300:]}")
        with Image.open(out_png) as im:
            im.load()
            return im.copy()


def render_formula(latex: str, out_path: Union[str, Path], font: str = stub_render.DEFAULT_FONT,
                   dpi: int = 120, renderer: str = STUB) -> Path:
    """Render ``latex`` to ``out_path``; raises :class:`CompileFailure` on bad input."""
    if renderer == STUB:
        raw = stub_render.rasterize(latex, font, dpi)
    else:
        raw = _run_command(renderer, latex, font, dpi)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    trim_and_pad(raw).save(out_path, format="PNG")
    return out_path
