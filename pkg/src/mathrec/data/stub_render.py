"""Deterministic synthetic formula rasterizer.

Lays out normalized LaTeX with PIL glyphs: scripts are shrunk and shifted,
fractions are stacked, radicals get a drawn sign.  It understands a fixed
command table and fails like a TeX compile on anything else, which is all
the dataset builder and the tests need.  Usable as a renderer command::

    python -m mathrec.data.stub_render LATEX_FILE OUT_PNG DPI FONT
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

from PIL import Image, ImageDraw, ImageFont

from mathrec.errors import CompileFailure, RendererUnavailable, UnbalancedBraces
from mathrec.latex.normalize import _Group, _parse, split_tokens

BASE_POINT_SIZE = 14
SCRIPT_SCALE = 0.7

FONT_FILES = {
    "dejavu-sans": ("DejaVuSans.ttf", "DejaVuSans-Bold.ttf"),
    "dejavu-serif": ("DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf"),
    "dejavu-mono": ("DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf"),
}
DEFAULT_FONT = "dejavu-sans"

GREEK = (
    "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu nu xi pi rho "
    "sigma tau upsilon phi chi psi omega"
).split()
SYMBOLS = {
    **{"\\" + g: c for g, c in zip(GREEK, "αβγδεζηθικλμνξπρστυφχψω")},
    "\\Gamma": "Γ", "\\Delta": "Δ", "\\Theta": "Θ", "\\Lambda": "Λ", "\\Xi": "Ξ",
    "\\Pi": "Π", "\\Sigma": "Σ", "\\Phi": "Φ", "\\Psi": "Ψ", "\\Omega": "Ω",
    "\\varepsilon": "ε", "\\varphi": "φ", "\\vartheta": "ϑ", "\\ell": "ℓ",
    "\\leq": "≤", "\\geq": "≥", "\\neq": "≠", "\\approx": "≈", "\\equiv": "≡",
    "\\sim": "∼", "\\simeq": "≃", "\\propto": "∝", "\\ll": "≪", "\\gg": "≫",
    "\\times": "×", "\\cdot": "·", "\\pm": "±", "\\mp": "∓", "\\div": "÷",
    "\\ast": "∗", "\\circ": "∘", "\\star": "⋆", "\\oplus": "⊕", "\\otimes": "⊗",
    "\\infty": "∞", "\\partial": "∂", "\\nabla": "∇", "\\forall": "∀", "\\exists": "∃",
    "\\in": "∈", "\\notin": "∉", "\\subset": "⊂", "\\subseteq": "⊆", "\\supset": "⊃",
    "\\cup": "∪", "\\cap": "∩", "\\emptyset": "∅", "\\neg": "¬", "\\wedge": "∧",
    "\\vee": "∨", "\\rightarrow": "→", "\\leftarrow": "←", "\\Rightarrow": "⇒",
    "\\Leftarrow": "⇐", "\\leftrightarrow": "↔", "\\Leftrightarrow": "⇔",
    "\\mapsto": "↦", "\\sum": "∑", "\\prod": "∏", "\\int": "∫", "\\oint": "∮",
    "\\cdots": "⋯", "\\ldots": "…", "\\dots": "…", "\\prime": "′", "\\hbar": "ħ",
    "\\langle": "⟨", "\\rangle": "⟩", "\\mid": "|", "\\perp": "⊥", "\\angle": "∠",
    "\\{": "{", "\\}": "}", "\\|": "‖", "\\%": "%", "\\$": "$", "\\#": "#", "\\&": "&",
    "\\_": "_",
}
OPERATOR_NAMES = {"\\" + n: n for n in "sin cos tan log ln exp lim max min det arg sup inf".split()}
SPACES = {"\\,": 0.17, "\\:": 0.22, "\\;": 0.28, "\\!": -0.17, "~": 0.33, "\\quad": 1.0, "\\qquad": 2.0}
ACCENTS = {"\\hat": "^", "\\widehat": "^", "\\tilde": "~", "\\widetilde": "~", "\\dot": "·",
           "\\ddot": "··", "\\check": "ˇ", "\\breve": "˘", "\\vec": "→", "\\overrightarrow": "→",
           "\\overleftarrow": "←"}
FONT_SWITCHES = {"\\mathrm", "\\mathit", "\\mathcal", "\\mathsf", "\\mathtt", "\\mathfrak",
                 "\\mathscr", "\\mathbb", "\\text", "\\textrm", "\\operatorname"}
BOLD_SWITCHES = {"\\mathbf", "\\boldsymbol", "\\textbf"}
FRACTIONS = {"\\frac", "\\dfrac", "\\tfrac", "\\binom"}
STACKS = {"\\overset", "\\stackrel", "\\underset"}
DELIMITER_SIZERS = {"\\left", "\\right", "\\big", "\\Big", "\\bigg", "\\Bigg", "\\bigl",
                    "\\bigr", "\\Bigl", "\\Bigr"}
ROW_BREAKS = {"\\\\", "&"}


@lru_cache(maxsize=None)
def font_path(name: str, bold: bool = False) -> str:
    if name not in FONT_FILES:
        raise CompileFailure(f"unknown font {name!r}; known: {sorted(FONT_FILES)}")
    filename = FONT_FILES[name][int(bold)]
    candidates = [Path("/usr/share/fonts/truetype/dejavu"), Path("/usr/share/fonts/TTF")]
    try:
        import matplotlib

        candidates.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
    except ImportError:
        pass
    for folder in candidates:
        if (folder / filename).is_file():
            return str(folder / filename)
    raise RendererUnavailable(f"font file {filename} not found")


@lru_cache(maxsize=256)
def _font(name: str, size: int, bold: bool) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(font_path(name, bold), max(size, 4))


@dataclass
class Box:
    """A laid-out item. Coordinates are relative to the left end of the baseline."""

    width: float = 0.0
    ascent: float = 0.0
    descent: float = 0.0
    items: list = field(default_factory=list)

    def place(self, other: "Box", dx: float, dy: float) -> None:
        # dy > 0 moves down
        for kind, x, y, payload in other.items:
            self.items.append((kind, x + dx, y + dy, payload))


@dataclass(frozen=True)
class Style:
    font: str
    size: int
    bold: bool = False


def _text_box(text: str, style: Style) -> Box:
    font = _font(style.font, style.size, style.bold)
    left, top, right, bottom = font.getbbox(text, anchor="ls")
    width = max(font.getlength(text), right)
    box = Box(width=width, ascent=max(-top, 0), descent=max(bottom, 0))
    box.items.append(("text", 0.0, 0.0, (text, style)))
    return box


def _hlist(boxes: list[Box]) -> Box:
    out = Box()
    for b in boxes:
        out.place(b, out.width, 0.0)
        out.width += b.width
        out.ascent = max(out.ascent, b.ascent)
        out.descent = max(out.descent, b.descent)
    return out


def _shrink(style: Style) -> Style:
    return Style(style.font, max(int(round(style.size * SCRIPT_SCALE)), 6), style.bold)


class _Layout:
    def __init__(self, style: Style):
        self.style = style

    def nodes(self, nodes: list, style: Style) -> Box:
        boxes: list[Box] = []
        i = 0
        while i < len(nodes):
            node = nodes[i]
            i += 1
            if isinstance(node, _Group):
                boxes.append(self.nodes(node, style))
            elif node in ("^", "_"):
                if i >= len(nodes):
                    raise CompileFailure(f"missing argument for {node}")
                arg = self.arg(nodes[i], _shrink(style))
                i += 1
                base = boxes.pop() if boxes else Box()
                boxes.append(self.script(base, arg, node == "^", style))
            elif node in FRACTIONS or node in STACKS:
                if i + 1 >= len(nodes):
                    raise CompileFailure(f"missing arguments for {node}")
                first, second = nodes[i], nodes[i + 1]
                i += 2
                if node in FRACTIONS:
                    boxes.append(self.fraction(first, second, style, rule=node != "\\binom"))
                else:
                    boxes.append(self.stack(first, second, style, over=node != "\\underset"))
            elif node == "\\sqrt":
                index = None
                if i < len(nodes) and nodes[i] == "[":
                    j = nodes.index("]", i) if "]" in nodes[i:] else None
                    if j is None:
                        raise CompileFailure("unterminated optional argument of \\sqrt")
                    index = self.nodes(nodes[i + 1 : j], _shrink(_shrink(style)))
                    i = j + 1
                if i >= len(nodes):
                    raise CompileFailure("missing argument for \\sqrt")
                boxes.append(self.radical(self.arg(nodes[i], style), index, style))
                i += 1
            elif node in ACCENTS or node in ("\\bar", "\\overline", "\\underline"):
                if i >= len(nodes):
                    raise CompileFailure(f"missing argument for {node}")
                boxes.append(self.accent(node, self.arg(nodes[i], style), style))
                i += 1
            elif node in FONT_SWITCHES or node in BOLD_SWITCHES:
                if i >= len(nodes):
                    raise CompileFailure(f"missing argument for {node}")
                inner = Style(style.font, style.size, node in BOLD_SWITCHES or style.bold)
                boxes.append(self.arg(nodes[i], inner))
                i += 1
            elif node in ("\\overbrace", "\\underbrace"):
                if i >= len(nodes):
                    raise CompileFailure(f"missing argument for {node}")
                boxes.append(self.accent("\\overline" if node == "\\overbrace" else "\\underline",
                                         self.arg(nodes[i], style), style))
                i += 1
            elif node in DELIMITER_SIZERS:
                if i >= len(nodes):
                    raise CompileFailure(f"missing delimiter after {node}")
                delim = nodes[i]
                i += 1
                if delim != ".":
                    boxes.append(self.symbol(delim, style))
            elif node in ROW_BREAKS:
                boxes.append(_text_box("  ", style))
            else:
                boxes.append(self.symbol(node, style))
        return _hlist(boxes)

    def arg(self, node, style: Style) -> Box:
        return self.nodes(node if isinstance(node, _Group) else [node], style)

    def symbol(self, token: str, style: Style) -> Box:
        if isinstance(token, _Group):
            return self.nodes(token, style)
        if token in SPACES:
            return Box(width=SPACES[token] * style.size)
        if token in SYMBOLS:
            return _text_box(SYMBOLS[token], style)
        if token in OPERATOR_NAMES:
            return _text_box(OPERATOR_NAMES[token], style)
        if token.startswith("\\") and len(token) > 1 and token[1].isalpha():
            raise CompileFailure(f"undefined control sequence {token}")
        if token.startswith("\\"):
            raise CompileFailure(f"unsupported escape {token}")
        return _text_box(token, style)

    def script(self, base: Box, arg: Box, sup: bool, style: Style) -> Box:
        out = Box()
        out.place(base, 0.0, 0.0)
        shift = style.size * (0.45 if sup else -0.25)
        out.place(arg, base.width + 1, -shift)
        out.width = base.width + 1 + arg.width
        out.ascent = max(base.ascent, arg.ascent + shift)
        out.descent = max(base.descent, arg.descent - shift)
        return out

    def fraction(self, num, den, style: Style, rule: bool) -> Box:
        inner = _shrink(style) if style.size > 10 else style
        top, bottom = self.arg(num, inner), self.arg(den, inner)
        width = max(top.width, bottom.width) + 4
        axis = style.size * 0.3
        gap = max(2.0, style.size * 0.12)
        out = Box(width=width)
        out.place(top, (width - top.width) / 2, -(axis + gap + top.descent))
        out.place(bottom, (width - bottom.width) / 2, -(axis - gap - bottom.ascent))
        if rule:
            out.items.append(("rule", 0.0, -axis, (width, max(1.0, style.size / 16))))
        else:
            out.place(_text_box("(", style), -style.size * 0.3, 0)
        out.ascent = axis + gap + top.descent + top.ascent
        out.descent = max(0.0, bottom.ascent + bottom.descent - axis + gap)
        return out

    def stack(self, upper, lower, style: Style, over: bool) -> Box:
        small, main = self.arg(upper, _shrink(style)), self.arg(lower, style)
        width = max(small.width, main.width)
        out = Box(width=width)
        out.place(main, (width - main.width) / 2, 0.0)
        if over:
            out.place(small, (width - small.width) / 2, -(main.ascent + 2 + small.descent))
            out.ascent = main.ascent + 2 + small.descent + small.ascent
            out.descent = main.descent
        else:
            out.place(small, (width - small.width) / 2, main.descent + 2 + small.ascent)
            out.ascent = main.ascent
            out.descent = main.descent + 2 + small.ascent + small.descent
        return out

    def radical(self, body: Box, index, style: Style) -> Box:
        lead = style.size * 0.6
        pad = max(2.0, style.size * 0.1)
        top = body.ascent + pad
        out = Box(width=lead + body.width + 2, ascent=top + 1, descent=body.descent)
        stroke = max(1.0, style.size / 16)
        out.items.append(("line", 0.0, 0.0, (
            (0.0, -style.size * 0.25), (lead * 0.35, -style.size * 0.35),
            (lead * 0.6, body.descent), (lead, -top), (lead + body.width + 2, -top), stroke)))
        out.place(body, lead + 1, 0.0)
        if index is not None:
            out.place(index, 0.0, -style.size * 0.45)
            out.ascent = max(out.ascent, style.size * 0.45 + index.ascent)
        return out

    def accent(self, kind: str, body: Box, style: Style) -> Box:
        out = Box(width=body.width, ascent=body.ascent, descent=body.descent)
        out.place(body, 0.0, 0.0)
        stroke = max(1.0, style.size / 16)
        if kind == "\\underline":
            y = body.descent + 2
            out.items.append(("rule", 0.0, y, (body.width, stroke)))
            out.descent = y + stroke
        elif kind in ("\\bar", "\\overline"):
            y = -(body.ascent + 2)
            out.items.append(("rule", 0.0, y, (body.width, stroke)))
            out.ascent = body.ascent + 2 + stroke
        else:
            mark = _text_box(ACCENTS[kind], _shrink(style))
            y = -(body.ascent + 1 + mark.descent)
            out.place(mark, (body.width - mark.width) / 2, y)
            out.ascent = body.ascent + 1 + mark.descent + mark.ascent
        return out


def layout(latex: str, font: str, dpi: int) -> Box:
    if dpi <= 0:
        raise CompileFailure(f"invalid dpi {dpi}")
    size = max(int(round(BASE_POINT_SIZE * dpi / 72.0)), 6)
    try:
        tree = _parse(split_tokens(latex))
    except UnbalancedBraces as exc:
        raise CompileFailure(str(exc)) from exc
    style = Style(font, size)
    font_path(font)
    return _Layout(style).nodes(tree, style)


def rasterize(latex: str, font: str = DEFAULT_FONT, dpi: int = 120) -> Image.Image:
    """Render to an untrimmed grayscale image (black ink on white)."""
    box = layout(latex, font, dpi)
    margin = 4
    width = int(box.width + 2 * margin) + 1
    height = int(box.ascent + box.descent + 2 * margin) + 1
    image = Image.new("L", (max(width, 1), max(height, 1)), 255)
    draw = ImageDraw.Draw(image)
    ox, oy = margin, margin + box.ascent
    for kind, x, y, payload in box.items:
        if kind == "text":
            text, style = payload
            draw.text((ox + x, oy + y), text, fill=0, anchor="ls",
                      font=_font(style.font, style.size, style.bold))
        elif kind == "rule":
            w, t = payload
            draw.rectangle([ox + x, oy + y - t / 2, ox + x + w, oy + y + t / 2], fill=0)
        elif kind == "line":
            *points, stroke = payload
            draw.line([(ox + x + px, oy + y + py) for px, py in points], fill=0,
                      width=int(round(stroke)))
    return image


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 4:
        print("usage: stub_render LATEX_FILE OUT_PNG DPI FONT", file=sys.stderr)
        return 2
    latex_file, out_png, dpi, font = argv
    latex = Path(latex_file).read_text(encoding="utf-8").strip()
    try:
        rasterize(latex, font, int(dpi)).save(out_png, format="PNG")
    except (CompileFailure, RendererUnavailable) as exc:
        print(f"render failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
