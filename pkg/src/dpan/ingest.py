"""Ingest real measurement dumps: hex text files -> PGM dataset + manifest.

Directory layouts differ between collections, so the caller supplies a path
template naming the fields encoded in each file path, e.g.

    {device}/{voltage}/{temp}/{pattern}_{repeat}.txt

Fields: device (free string), pattern (FF/00/55, with or without 0x or P_
prefixes), temp (number, optional trailing C), voltage (number, '.' or '_'
as the decimal point, optional trailing V), repeat (integer).
"""

from __future__ import annotations

import re
from pathlib import Path

from . import imgen, simulate

_FIELD_PATTERNS = {
    "device": r"(?P<device>[^/]+?)",
    "pattern": r"(?P<pattern>(?:P_|p_|0x|0X)?(?:FF|ff|00|55))",
    "temp": r"(?P<temp>\d+(?:\.\d+)?)[Cc]?",
    "voltage": r"(?P<voltage>\d+(?:[._]\d+)?)[Vv]?",
    "repeat": r"(?P<repeat>\d+)",
}


def template_to_regex(template: str) -> re.Pattern:
    out = []
    pos = 0
    for m in re.finditer(r"\{(\w+)\}", template):
        out.append(re.escape(template[pos : m.start()]))
        name = m.group(1)
        if name not in _FIELD_PATTERNS:
            raise ValueError(
                f"unknown template field {{{name}}}; expected one of "
                f"{sorted(_FIELD_PATTERNS)}"
            )
        out.append(_FIELD_PATTERNS[name])
        pos = m.end()
    out.append(re.escape(template[pos:]))
    return re.compile("".join(out) + r"\Z")


def _parse_fields(groups: dict) -> dict:
    fields = {
        "device_id": groups.get("device", "device0"),
        "pattern": simulate.ChallengePattern.parse(groups["pattern"]).value
        if "pattern" in groups and groups["pattern"]
        else simulate.ChallengePattern.P_FF.value,
        "temp_c": float(groups["temp"]) if groups.get("temp") else 20.0,
        "voltage_v": float(groups["voltage"].replace("_", "."))
        if groups.get("voltage")
        else simulate.VOLTAGE_NOMINAL,
        "repeat": int(groups["repeat"]) if groups.get("repeat") else 0,
    }
    return fields


def ingest_dataset(in_dir, layout: str, out_dir) -> simulate.DatasetManifest:
    """Convert every template-matching hex file under in_dir to a PGM."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"input directory {in_dir} does not exist")
    regex = template_to_regex(layout)
    matches = []
    for path in sorted(in_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(in_dir).as_posix()
        m = regex.match(rel)
        if m:
            matches.append((rel, path, _parse_fields(m.groupdict())))
    if not matches:
        raise ValueError(f"no files under {in_dir} match layout {layout!r}")

    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for rel, path, fields in matches:
        try:
            data = imgen.parse_hex_response(path.read_text())
        except imgen.HexFormatError as exc:
            raise imgen.HexFormatError(f"{rel}: {exc}") from exc
        env = simulate.EnvCondition(fields["temp_c"], fields["voltage_v"])
        pattern = simulate.ChallengePattern(fields["pattern"])
        name = simulate._image_name(
            fields["device_id"], pattern, env, fields["repeat"]
        )
        phenotype = imgen.imgen(data, label=fields["device_id"])
        imgen.write_pgm(out_dir / "images" / name, phenotype)
        records.append(
            simulate.ManifestRecord(
                device_id=fields["device_id"],
                pattern=fields["pattern"],
                temp_c=fields["temp_c"],
                voltage_v=fields["voltage_v"],
                repeat=fields["repeat"],
                image_path=f"images/{name}",
            )
        )
    records.sort(key=simulate.ManifestRecord.sort_key)
    devices = sorted({r.device_id for r in records})
    manifest = simulate.DatasetManifest(
        records=records,
        devices=[{"device_id": d} for d in devices],
        seed=None,
        root=out_dir,
    )
    manifest.save(out_dir / "manifest.json")
    return manifest
