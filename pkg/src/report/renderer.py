from pathlib import Path

from jinja2 import Environment, FileSystemLoader, select_autoescape

TEMPLATE_DIR = Path(__file__).resolve().parent


def render_report(path, title: str, summary: dict, rows: list[dict] | None = None, columns=None) -> Path:
    # Renders the HTML template with a run summary and an optional per-row table.
    env = Environment(
        loader=FileSystemLoader(TEMPLATE_DIR),
        autoescape=select_autoescape(["html"]),
        keep_trailing_newline=True,
    )
    env.filters["fmt"] = _fmt
    template = env.get_template("template.html")

    rows = rows or []
    columns = columns or (list(rows[0].keys()) if rows else [])
    html = template.render(title=title, summary=summary, rows=rows, columns=columns)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(html)
    return path


def _fmt(value):
    # Floats to 6 significant digits, everything else as-is
    if isinstance(value, float):
        return f"{value:.6g}"
    if value is None:
        return "-"
    return value
