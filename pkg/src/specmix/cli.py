"""``specmix`` command line: synth | eea | unmix | eval | render.

Failures print a single ``specmix: error: <kind>: <message>`` line on stderr
and exit with status 1 (usage errors exit 2, as argparse does).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from specmix import __version__, eea, io
from specmix.config import KEYS, REQUIRED, RunConfig, read_config
from specmix.errors import SpecmixError
from specmix.metrics import evaluate
from specmix.neighborhood import NeighborhoodSpec
from specmix.scene import NoiseSpec, SceneConfig, add_noise, synth_scene
from specmix.trainer import unmix


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"specmix: error: usage: {message}\n")


def _snr_tag(snr):
    return f"{snr:g}".replace(".", "p")


def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    img, truth = synth_scene(
        args.m, args.l, args.h, args.w, args.seed, config=SceneConfig(pure_pixels=args.pure_pixels)
    )
    written = [out / "scene.hsif", out / "signatures.csv", out / "abundances.csv"]
    io.save_image(img, written[0])
    io.save_signatures_csv(truth.signatures, written[1])
    io.save_abundances(truth.abundances, written[2])
    for snr in args.snr or ():
        noisy = add_noise(img, NoiseSpec(snr, args.seed))
        path = out / f"scene_snr{_snr_tag(snr)}.hsif"
        io.save_image(noisy, path)
        written.append(path)
    for p in written:
        print(p)


def cmd_eea(args):
    img = io.load_image(args.image)
    algos = [a.strip().lower() for a in args.algos.split(",") if a.strip()]
    if not algos:
        raise SpecmixError("--algos is empty")
    sets = [eea.extract(img.data, args.m, a, seed=args.seed) for a in algos]
    ensemble = eea.build_ensembles(sets, args.m)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"n_eea": ensemble.n_eea, "endmembers": args.m, "members": []}
    for k, s in enumerate(sets):
        path = out / f"ensemble_{ensemble.sources[k]}.csv"
        io.save_signatures_csv(ensemble.member(k), path)
        summary["members"].append(
            {"algorithm": s.source, "file": path.name, "column_order": ensemble.permutations[k],
             "pixel_indices": [int(i) for i in np.asarray(s.indices)[ensemble.permutations[k]]],
             "degenerate": bool(s.degenerate)}
        )
        print(path)
    (out / "ensemble.json").write_text(json.dumps(summary, indent=2))


def cmd_unmix(args):
    file_values = read_config(args.config) if args.config else {}
    overrides = {}
    if args.nbhd:
        nb = NeighborhoodSpec.parse(args.nbhd)
        overrides = {"nbhd_shape": nb.shape, "nbhd_level": nb.level, "nbhd_seed": nb.seed}
    overrides.update({k: v for k in KEYS if (v := getattr(args, k)) is not None})
    cfg = RunConfig.build(file_values, overrides)
    img = io.load_image(cfg.image)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(cfg.dumps())
    result = unmix(img, cfg.endmembers, cfg.train_config(), eeas=cfg.eeas, checkpoint_dir=out)
    io.save_signatures_csv(result.signatures, out / "signatures.csv")
    io.save_abundances(result.abundances, out / "abundances.csv")
    (out / "report.json").write_text(result.report.to_json())
    print(out)


def _load_pair(directory):
    d = Path(directory)
    return io.load_signatures_csv(d / "signatures.csv"), io.load_abundances(d / "abundances.csv")


def cmd_eval(args):
    S_hat, A_hat = _load_pair(args.pred)
    S_gt, A_gt = _load_pair(args.truth)
    result = evaluate(S_hat, A_hat, S_gt, A_gt)
    print(result.to_json() if args.json else result.table())


def cmd_render(args):
    A = io.load_abundances(args.abundances)
    if args.image:
        img = io.load_image(args.image)
        h, w = img.height, img.width
    elif args.height and args.width:
        h, w = args.height, args.width
    else:
        raise SpecmixError("give --image or both --height and --width")
    if h * w != A.shape[1]:
        raise SpecmixError(f"{A.shape[1]} abundance rows do not fit a {h}x{w} image")
    for p in io.render_abundances(A, h, w, args.out, png=args.png):
        print(p)


def _add_config_flags(p):
    for name, key in KEYS.items():
        flag = "--" + name.replace("_", "-")
        default = "required" if key.default is REQUIRED else key.default
        p.add_argument(flag, dest=name, default=None, help=f"{key.doc} (default: {default})")


def build_parser():
    parser = _Parser(prog="specmix", description="Hyperspectral unmixing with endmember-ensemble fusion.")
    parser.add_argument("--version", action="version", version=f"specmix {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic scene and its ground truth")
    p.add_argument("--m", type=int, required=True, help="endmembers")
    p.add_argument("--l", type=int, required=True, help="bands")
    p.add_argument("--h", type=int, required=True, help="height")
    p.add_argument("--w", type=int, required=True, help="width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snr", type=float, action="append", help="also write a noisy copy at this SNR (dB); repeatable")
    p.add_argument("--pure-pixels", action="store_true", help="one-hot abundances at the Worley seed pixels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eea", help="run extraction algorithms and write aligned ensemble members")
    p.add_argument("--image", required=True)
    p.add_argument("--algos", default=",".join(eea.ALGORITHMS))
    p.add_argument("--m", type=int, required=True, help="endmembers")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eea)

    p = sub.add_parser("unmix", help="train the networks and write abundances, signatures and checkpoints")
    p.add_argument("--config", help="config file or preset name")
    p.add_argument("--nbhd", help="whole neighborhood in one flag, e.g. shape=circle,level=4,seed=7; omitted fields take defaults")
    _add_config_flags(p)
    p.set_defaults(func=cmd_unmix)

    p = sub.add_parser("eval", help="compare a prediction directory with a ground-truth directory")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="write one grayscale map per endmember")
    p.add_argument("--abundances", required=True)
    p.add_argument("--image", help="HSIF file supplying the map size")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--png", action="store_true", help="also write PNG (needs Pillow)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (SpecmixError, OSError, ValueError, ImportError) as exc:
        kind = type(exc).__name__
        msg = str(exc).splitlines()[0] if str(exc) else kind
        print(f"specmix: error: {kind}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
