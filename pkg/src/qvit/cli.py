"""Command-line front end.

Subcommands: gen-data, train, eval, verify, compile, inspect.  Every
command is deterministic given its flags and seeds, and a training run
directory contains everything needed to reproduce it (resolved config +
seed).  Exit codes: 0 success, 1 usage error, 2 validation/verification
failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import loaders, ortho, qsim
from . import model as model_mod
from . import train as train_mod
from .attention import (
    attention_coefficient,
    attention_coefficient_dense,
    quantum_attention_forward,
)
from .model import ModelConfig
from .svgplot import Panel, render_svg
from .train import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_IO = 3


class ConfigError(ValueError):
    """Bad run configuration (unknown key, unparsable value, mismatch)."""


# ---------------------------------------------------------------------------
# run configuration: flat "key = value" text, CLI flags override


CONFIG_DEFAULTS: dict[str, str] = {
    "model": "qvit",
    "image_size": "16",
    "channels": "3",
    "patch_size": "4",
    "projection_dim": "8",
    "n_blocks": "1",
    "n_heads": "1",
    "dropout": "0.5",
    "epochs": "15",
    "batch_size": "32",
    "learning_rate": "0.0005",
    "adam_beta1": "0.9",
    "adam_beta2": "0.999",
    "adam_epsilon": "1e-8",
    "seed": "0",
    "data": "",
    "out": "",
}

_MODEL_KIND = {"qvit": "quantum", "vit": "classical"}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def format_config(values: dict[str, str]) -> str:
    return "\n".join(f"{k} = {values[k]}" for k in CONFIG_DEFAULTS) + "\n"


def resolve_config(args: argparse.Namespace) -> dict[str, str]:
    values = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    overrides = {
        "model": args.model,
        "patch_size": args.patch_size,
        "projection_dim": args.projection_dim,
        "n_blocks": args.n_blocks,
        "dropout": args.dropout,
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
        "data": args.data,
        "out": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = str(value)
    if values["model"] not in _MODEL_KIND:
        raise ConfigError(f"model must be qvit or vit, got {values['model']!r}")
    return values


def _configs_from_values(values: dict[str, str]) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_config = ModelConfig(
            image_size=int(values["image_size"]),
            channels=int(values["channels"]),
            patch_size=int(values["patch_size"]),
            projection_dim=int(values["projection_dim"]),
            n_blocks=int(values["n_blocks"]),
            n_heads=int(values["n_heads"]),
            dropout_rate=float(values["dropout"]),
            attention_kind=_MODEL_KIND[values["model"]],
        )
        train_config = TrainConfig(
            epochs=int(values["epochs"]),
            batch_size=int(values["batch_size"]),
            learning_rate=float(values["learning_rate"]),
            adam_beta1=float(values["adam_beta1"]),
            adam_beta2=float(values["adam_beta2"]),
            adam_epsilon=float(values["adam_epsilon"]),
            seed=int(values["seed"]),
            dropout_rate=float(values["dropout"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return model_config, train_config


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args: argparse.Namespace) -> int:
    manifest = data_mod.generate_dataset(
        args.out, n_samples=args.samples, image_size=args.image_size, seed=args.seed
    )
    print(
        f"wrote {manifest.n_samples} samples "
        f"({manifest.n_train}/{manifest.n_val}/{manifest.n_test} train/val/test) "
        f"to {args.out}"
    )
    return EXIT_OK


def _metric_curves(records: list[train_mod.MetricsRecord], label: str) -> dict:
    out: dict[str, tuple[list, list]] = {}
    for split in ("train", "val"):
        rows = [r for r in records if r.split == split]
        out[f"{label}-{split}"] = (
            [r.epoch for r in rows],
            {"loss": [r.loss for r in rows], "auc": [r.auc for r in rows]},
        )
    return out


def _records_from_csv(path: str) -> list[train_mod.MetricsRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != train_mod.CSV_HEADER:
            raise ConfigError(f"{path}: unexpected CSV header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            epoch, split, loss, acc, auc = line.split(",")
            records.append(
                train_mod.MetricsRecord(
                    int(epoch), split, float(loss), float(acc), float(auc)
                )
            )
    return records


def write_curves_svg(
    path: str, records: list[train_mod.MetricsRecord], label: str,
    overlay: list[tuple[str, list[train_mod.MetricsRecord]]] = (),
) -> None:
    loss_panel = Panel("loss vs epoch", "epoch", "loss")
    auc_panel = Panel("ROC AUC vs epoch", "epoch", "auc")
    for series_label, recs in [(label, records), *overlay]:
        for name, (xs, ys) in _metric_curves(recs, series_label).items():
            loss_panel.add(name, xs, ys["loss"])
            auc_panel.add(name, xs, ys["auc"])
    with open(path, "w") as fh:
        fh.write(render_svg([loss_panel, auc_panel]))


def cmd_train(args: argparse.Namespace) -> int:
    values = resolve_config(args)
    if not values["data"] or not values["out"]:
        raise ConfigError("train needs --data and --out (or config file entries)")
    dataset = data_mod.load_dataset(values["data"])
    values["image_size"] = str(dataset.manifest.image_size)
    values["channels"] = str(len(dataset.manifest.channels))
    model_config, train_config = _configs_from_values(values)

    out_dir = values["out"]
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(format_config(values))

    init_rng = np.random.default_rng(
        np.random.SeedSequence(train_config.seed).spawn(1)[0]
    )
    params = model_mod.init_params(model_config, init_rng)
    records, best_params = train_mod.train_loop(
        params,
        model_config,
        train_config,
        dataset.split("train"),
        dataset.split("val"),
    )
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(train_mod.format_metrics_csv(records))
    model_mod.save_checkpoint(best_params, os.path.join(out_dir, "checkpoint-best"))

    overlay = []
    if args.overlay:
        overlay.append((args.overlay_label, _records_from_csv(args.overlay)))
    write_curves_svg(
        os.path.join(out_dir, "curves.svg"), records, values["model"], overlay
    )
    best_val = max(r.auc for r in records if r.split == "val")
    print(f"run complete: best val AUC {best_val:.4f}; outputs in {out_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config_path = os.path.join(args.run, "config.txt")
    if not os.path.isfile(config_path):
        raise FileNotFoundError(f"no resolved config at {config_path}")
    values = dict(CONFIG_DEFAULTS)
    values.update(parse_config_file(config_path))
    if args.data:
        values["data"] = args.data
    dataset = data_mod.load_dataset(values["data"])
    values["image_size"] = str(dataset.manifest.image_size)
    values["channels"] = str(len(dataset.manifest.channels))
    model_config, train_config = _configs_from_values(values)
    checkpoint = os.path.join(args.run, "checkpoint-best")
    params = model_mod.load_checkpoint(checkpoint)
    record = train_mod.evaluate(
        params, model_config, dataset.split(args.split),
        epoch=train_config.epochs, split_name=args.split,
    )
    line = (
        f"{record.epoch},{record.split},{record.loss:.6f},"
        f"{record.accuracy:.6f},{record.auc:.6f}"
    )
    print(train_mod.CSV_HEADER)
    print(line)
    csv_path = os.path.join(args.run, "metrics.csv")
    if os.path.isfile(csv_path):
        with open(csv_path, "a") as fh:
            fh.write(line + "\n")
    return EXIT_OK


def cmd_compile(args: argparse.Namespace) -> int:
    try:
        matrix = np.loadtxt(args.matrix, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"could not parse matrix file {args.matrix}: {exc}") from exc
    layer = ortho.compile_matrix(matrix)
    with open(args.out, "w") as fh:
        fh.write("\n".join(f"{a:.15g}" for a in layer.angles) + "\n")
    print(f"compiled {layer.n}x{layer.n} matrix into {len(layer.angles)} angles")
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    if args.circuit == "pyramid":
        n = args.n
        count = n * (n - 1) // 2
        if args.angles:
            angles = np.loadtxt(args.angles, ndmin=1)
            if angles.shape != (count,):
                raise ConfigError(f"expected {count} angles, got {angles.shape}")
        else:
            angles = np.zeros(count)
        circuit = ortho.layer_to_circuit(ortho.PyramidLayer(n, angles))
    elif args.circuit == "loader":
        if args.vector:
            x = np.array([float(v) for v in args.vector.split(",")])
        else:
            x = np.full(args.n, 1.0 / np.sqrt(args.n))
        prog = loaders.compute_loader_angles(x)
        print(f"# loader sign {prog.sign:+.0f}")
        circuit = loaders.build_loader_circuit(prog)
    elif args.circuit == "rbs":
        circuit = qsim.Circuit(2, tuple(qsim.rbs_decomposition(0, 1, args.theta)))
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown circuit {args.circuit!r}")
    print(qsim.circuit_to_text(circuit))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification suite


def _check_rbs_orthogonality(rng, rbs_unary) -> str | None:
    for _ in range(50):
        theta = rng.uniform(-np.pi, np.pi)
        r = qsim.rbs_matrix(theta)
        err = np.abs(r @ r.T - np.eye(4)).max()
        if err > 1e-14:
            return f"RBS({theta:.4f}) deviates from orthogonal by {err:.2e}"
    return None


def _random_unary_circuit(rng, n_max=8, depth_max=40):
    n = int(rng.integers(2, n_max + 1))
    q0 = int(rng.integers(0, n))
    gates = [qsim.Gate.x(q0)]
    for _ in range(int(rng.integers(1, depth_max))):
        q1, q2 = rng.choice(n, size=2, replace=False)
        gates.append(qsim.Gate.rbs(int(q1), int(q2), float(rng.uniform(-np.pi, np.pi))))
    return qsim.Circuit(n, tuple(gates))


def _check_dense_norm(rng, rbs_unary) -> str | None:
    for _ in range(20):
        circuit = _random_unary_circuit(rng)
        psi = qsim.run_dense(circuit)
        err = abs(np.linalg.norm(psi) - 1.0)
        if err > 1e-12:
            return f"norm drifted by {err:.2e}"
    return None


def _check_subspace_closure(rng, rbs_unary) -> str | None:
    for _ in range(20):
        circuit = _random_unary_circuit(rng)
        psi = qsim.zero_state(circuit.n_qubits)
        for gate in circuit.gates:
            psi = qsim.apply_gate_dense(psi, gate)
            if gate.kind == "X":
                continue
            idx = [
                qsim.unary_basis_index(circuit.n_qubits, i)
                for i in range(circuit.n_qubits)
            ]
            leak = np.linalg.norm(np.delete(psi, idx))
            if leak > 1e-12:
                return f"amplitude {leak:.2e} escaped the weight-1 subspace"
    return None


def _check_unary_dense_equivalence(rng, rbs_unary) -> str | None:
    for _ in range(30):
        circuit = _random_unary_circuit(rng)
        amps = None
        for gate in circuit.gates:
            if gate.kind == "X":
                amps = np.zeros(circuit.n_qubits)
                amps[gate.qubits[0]] = 1.0
            else:
                amps = rbs_unary(amps, gate.qubits[0], gate.qubits[1], gate.angle)
        dense = qsim.unary_from_dense(qsim.run_dense(circuit), circuit.n_qubits)
        err = np.abs(dense - amps).max()
        if err > 1e-10:
            return f"fast path deviates from dense by {err:.2e}"
    return None


def _check_rbs_decomposition(rng, rbs_unary) -> str | None:
    for _ in range(20):
        theta = rng.uniform(-np.pi, np.pi)
        circuit = qsim.Circuit(2, tuple(qsim.rbs_decomposition(0, 1, theta)))
        u = qsim.circuit_unitary(circuit)
        target = qsim.rbs_matrix(theta)
        phase = np.exp(1j * np.angle(np.trace(target.conj().T @ u)))
        err = np.abs(u - phase * target).max()
        if err > 1e-12:
            return f"decomposition off by {err:.2e} at theta={theta:.4f}"
    return None


def _check_loader_reconstruction(rng, rbs_unary) -> str | None:
    for _ in range(100):
        n = int(rng.integers(2, 13))
        x = rng.normal(size=n)
        x /= np.linalg.norm(x)
        prog = loaders.compute_loader_angles(x)
        circuit = loaders.build_loader_circuit(prog)
        n_rbs = sum(1 for g in circuit.gates if g.kind == "RBS")
        if n_rbs != n - 1:
            return f"loader used {n_rbs} RBS gates for n={n}"
        amps = None
        for gate in circuit.gates:
            if gate.kind == "X":
                amps = np.zeros(n)
                amps[gate.qubits[0]] = 1.0
            else:
                amps = rbs_unary(amps, gate.qubits[0], gate.qubits[1], gate.angle)
        err = np.abs(amps - prog.sign * x).max()
        if err > 1e-10:
            return f"reconstruction error {err:.2e} at n={n}"
    return None


def _check_loader_adjoint_identity(rng, rbs_unary) -> str | None:
    for _ in range(20):
        n = int(rng.integers(2, 9))
        x = rng.normal(size=n)
        x /= np.linalg.norm(x)
        prog = loaders.compute_loader_angles(x)
        gates = list(loaders.build_loader_circuit(prog).gates)
        gates += list(loaders.build_adjoint_loader(prog).gates)
        psi = qsim.run_dense(qsim.Circuit(n, tuple(gates)))
        if abs(psi[0] - 1.0) > 1e-12:
            return f"loader then adjoint left |0...0| at {abs(psi[0]):.12f}"
    return None


def _check_loader_inner_product(rng, rbs_unary) -> str | None:
    for _ in range(20):
        n = int(rng.integers(2, 9))
        x = rng.normal(size=n)
        x /= np.linalg.norm(x)
        y = rng.normal(size=n)
        y /= np.linalg.norm(y)
        px = loaders.compute_loader_angles(x)
        py = loaders.compute_loader_angles(y)
        gates = list(loaders.build_loader_circuit(py).gates)
        gates += loaders.adjoint_cascade_gates(px)
        psi = qsim.run_dense(qsim.Circuit(n, tuple(gates)))
        prob = qsim.measure_qubit_one_prob(psi, 0)
        if abs(prob - float(x @ y) ** 2) > 1e-10:
            return f"inner-product probability off by {abs(prob - (x @ y) ** 2):.2e}"
    return None


def _check_pyramid_gate_count(rng, rbs_unary) -> str | None:
    for n in range(2, 13):
        wiring = ortho.pyramid_wiring(n)
        if len(wiring) != n * (n - 1) // 2:
            return f"n={n} produced {len(wiring)} gates"
        if any(q2 != q1 + 1 for q1, q2 in wiring):
            return f"n={n} wiring contains a non-adjacent pair"
    return None


def _check_pyramid_orthogonality(rng, rbs_unary) -> str | None:
    for _ in range(30):
        n = int(rng.integers(2, 11))
        layer = ortho.random_layer(n, rng, std=1.0)
        m = ortho.extract_matrix(layer)
        err = np.abs(m.T @ m - np.eye(n)).max()
        if err > 1e-10:
            return f"extracted matrix off orthogonal by {err:.2e}"
    return None


def _check_compile_roundtrip(rng, rbs_unary) -> str | None:
    for _ in range(20):
        n = int(rng.integers(2, 9))
        m = ortho.extract_matrix(ortho.random_layer(n, rng, std=1.0))
        err = np.abs(ortho.extract_matrix(ortho.compile_matrix(m)) - m).max()
        if err > 1e-8:
            return f"round-trip error {err:.2e} at n={n}"
    return None


def _check_attention_equivalence(rng, rbs_unary) -> str | None:
    for _ in range(30):
        d = int(rng.integers(2, 9))
        w = ortho.random_layer(d, rng, std=0.8)
        x_i = rng.normal(size=d)
        x_i /= np.linalg.norm(x_i)
        x_j = rng.normal(size=d)
        x_j /= np.linalg.norm(x_j)
        fast = attention_coefficient(x_i, x_j, w)
        dense = attention_coefficient_dense(x_i, x_j, w)
        if abs(fast - dense) > 1e-10:
            return f"fast path {fast:.12f} vs circuit {dense:.12f}"
    return None


def _check_attention_rows(rng, rbs_unary) -> str | None:
    from .attention import AttentionParams

    for _ in range(5):
        s, d = int(rng.integers(2, 7)), int(rng.integers(2, 7))
        tokens = rng.normal(size=(s, d))
        params = AttentionParams(
            ortho.random_layer(d, rng, 0.5), ortho.random_layer(d, rng, 0.5)
        )
        _, cache = quantum_attention_forward(tokens, params)
        att = cache["att"]
        if np.abs(att.sum(axis=1) - 1.0).max() > 1e-12:
            return "attention map rows do not sum to 1"
        if cache["p"].min() < -1 - 1e-12 or (cache["p"] ** 2).max() > 1 + 1e-12:
            return "coefficient left [0, 1]"
    return None


VERIFY_CHECKS = [
    ("rbs-orthogonality", _check_rbs_orthogonality),
    ("dense-norm-preservation", _check_dense_norm),
    ("subspace-closure", _check_subspace_closure),
    ("unary-dense-equivalence", _check_unary_dense_equivalence),
    ("rbs-decomposition-soundness", _check_rbs_decomposition),
    ("loader-reconstruction", _check_loader_reconstruction),
    ("loader-adjoint-identity", _check_loader_adjoint_identity),
    ("loader-inner-product", _check_loader_inner_product),
    ("pyramid-gate-count", _check_pyramid_gate_count),
    ("pyramid-orthogonality", _check_pyramid_orthogonality),
    ("compile-roundtrip", _check_compile_roundtrip),
    ("attention-circuit-equivalence", _check_attention_equivalence),
    ("attention-row-stochastic", _check_attention_rows),
]


def run_verification(seed: int = 0, fault: str | None = None) -> list[tuple[str, str | None]]:
    """Run every named invariant; returns (name, failure detail or None).

    ``fault="rbs-sign-flip"`` negates the angle in the unary fast path,
    which the equivalence invariants must catch; it exists so that the
    suite itself is testable.
    """
    if fault not in (None, "rbs-sign-flip"):
        raise ValueError(f"unknown fault {fault!r}")

    def rbs_unary(amps, q1, q2, angle):
        if fault == "rbs-sign-flip":
            angle = -angle
        return qsim.apply_rbs_unary(amps, q1, q2, angle)

    results = []
    for name, check in VERIFY_CHECKS:
        rng = np.random.default_rng(seed)
        results.append((name, check(rng, rbs_unary)))
    return results


def cmd_verify(args: argparse.Namespace) -> int:
    started = time.time()
    results = run_verification(seed=args.seed, fault=args.inject_fault)
    failures = 0
    for name, detail in results:
        if detail is None:
            print(f"PASS {name}")
        else:
            failures += 1
            print(f"FAIL {name}: {detail}")
    print(f"{len(results) - failures}/{len(results)} invariants passed "
          f"in {time.time() - started:.1f}s")
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qvit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic jet-image dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--samples", type=int, default=data_mod.DESK_SAMPLES)
    p.add_argument("--image-size", type=int, default=data_mod.DESK_IMAGE_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a run directory")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--model", choices=sorted(_MODEL_KIND))
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--dropout", type=float)
    p.add_argument("--patch-size", type=int, dest="patch_size")
    p.add_argument("--projection-dim", type=int, dest="projection_dim")
    p.add_argument("--n-blocks", type=int, dest="n_blocks")
    p.add_argument("--seed", type=int)
    p.add_argument("--overlay", help="metrics.csv of another run to overlay")
    p.add_argument("--overlay-label", default="other", dest="overlay_label")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a run's best checkpoint")
    p.add_argument("--run", required=True, help="run directory from `train`")
    p.add_argument("--data", help="dataset directory (defaults to the run's)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the circuit-identity suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=("rbs-sign-flip",), default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("compile", help="compile an orthogonal matrix to angles")
    p.add_argument("--matrix", required=True, help="whitespace-separated matrix file")
    p.add_argument("--out", required=True, help="angle list output file")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("inspect", help="print a circuit as text")
    p.add_argument("--circuit", choices=("pyramid", "loader", "rbs"), required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--angles", help="angle file for pyramid circuits")
    p.add_argument("--vector", help="comma-separated vector for loader circuits")
    p.add_argument("--theta", type=float, default=0.5, help="angle for rbs circuits")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0; usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ortho.NonOrthogonalError, ortho.NegativeDeterminantError,
            data_mod.DatasetFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
