"""Command line: lrpw-export --checkpoint model.pt --variant vgg_a_128n --out w.lrpw"""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, NormalizationSpec, export_file


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lrpw-export",
                                     description="Convert a trained checkpoint to a .lrpw container.")
    parser.add_argument("--checkpoint", required=True, help="torch checkpoint (.pt/.pth state dict)")
    parser.add_argument("--variant", required=True, choices=["vgg_a_128n", "vgg_a_one_fc", "toy"])
    parser.add_argument("--out", required=True)
    parser.add_argument("--mean", type=_floats, default=(0.0, 0.0, 0.0),
                        help="per-channel pixel mean, comma separated")
    parser.add_argument("--std", type=_floats, default=(1.0, 1.0, 1.0),
                        help="per-channel pixel std, comma separated")
    parser.add_argument("--damage-index", type=int, default=0, choices=[0, 1])
    args = parser.parse_args(argv)
    try:
        export_file(args.checkpoint, args.out, args.variant,
                    norm=NormalizationSpec(mean=args.mean, std=args.std),
                    damage_index=args.damage_index)
    except ExportError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: missing file {e.filename}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
