"""Command-line entry points for each pipeline phase.

Every subcommand reads a manifest (plus ``--seed`` / ``--set`` overrides) and
writes its outputs into the manifest's run directory. Failures print a single
``error: <Kind>: <message>`` line and exit 1; usage problems exit 2.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from mfbid import __version__
from mfbid.ctr import load_ftrl, log_loss, save_ftrl
from mfbid.data import (
    compute_cpm_train,
    generate_synthetic,
    parse_bid_log,
    train_test_split,
    write_bid_log,
)
from mfbid.env import EpochMetrics, SimulationLog, read_simulation_log, write_metrics_csv, write_simulation_log
from mfbid.errors import MfbidError
from mfbid.harness import (
    CtrPredictor,
    clearing_price_pdf,
    extract_survival_dataset,
    fit_ctr,
    opponent_config_for,
    run_phase1,
    run_replay,
)
from mfbid.manifest import Manifest, load_manifest
from mfbid.survival import (
    ConstantMarketModel,
    DasaModel,
    anlp,
    kaplan_meier,
    read_samples,
    total_variation,
    train_opponent,
    write_samples,
)
from mfbid.survival.distribution import PriceSpace

log = logging.getLogger("mfbid")


# ---------------------------------------------------------------- shared plumbing


class Run:
    """Resolved manifest plus lazily built request streams and CTR model."""

    def __init__(self, manifest: Manifest, out: Path):
        self.manifest = manifest
        self.out = out
        out.mkdir(parents=True, exist_ok=True)
        self._requests = None

    @property
    def requests(self):
        if self._requests is None:
            m = self.manifest
            if m.market.get("source", "synthetic") == "synthetic":
                self._requests, _ = generate_synthetic(m.synthetic_spec())
            else:
                if "path" not in m.market:
                    raise MfbidError("[market] path is required for source = tsv")
                self._requests = list(parse_bid_log(m.market["path"], m.log_schema()))
        return self._requests

    def split(self):
        return train_test_split(self.requests, self.manifest.train_fraction)

    @property
    def num_features(self) -> int:
        return max((max(r.features) for r in self.requests if r.features), default=0) + 1

    def scenario(self):
        train, _ = self.split()
        return self.manifest.scenario(compute_cpm_train(train), self.num_features)

    def ctr(self, scenario) -> CtrPredictor:
        path = self.out / "ctr.ftrl"
        if path.exists():
            return CtrPredictor(load_ftrl(path))
        train, _ = self.split()
        return fit_ctr(scenario, train)

    def model_path(self, agent: str) -> Path:
        return self.out / f"opponent-{agent}.json"


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _totals(series: list[EpochMetrics], names) -> str:
    lines = ["agent impressions clicks spend"]
    for i, n in enumerate(names):
        lines.append(f"{n} {sum(int(m.impressions[i]) for m in series)} "
                     f"{sum(int(m.clicks[i]) for m in series)} {sum(int(m.spend[i]) for m in series)}")
    return "\n".join(lines)


# ---------------------------------------------------------------- subcommands


def cmd_synth_gen(run: Run, args) -> None:
    spec = run.manifest.synthetic_spec()
    requests, truth = generate_synthetic(spec)
    write_bid_log(run.out / "requests.tsv", requests)
    print(f"wrote {run.out / 'requests.tsv'}")
    lines = [f"segments {len(spec.segments)}", f"conditional_entropy {spec.conditional_entropy():.6f}"]
    for k, s in enumerate(spec.segments):
        prices = ",".join(f"{p}:{q:g}" for p, q in sorted(s.prices.items()))
        share = float(np.mean(truth.segment == k))
        lines.append(f"segment {k} ctr {s.ctr:g} weight {s.weight:g} share {share:.4f} prices {prices}")
    _write(run.out / "ground_truth.txt", "\n".join(lines) + "\n")


def cmd_train_ctr(run: Run, args) -> None:
    scenario = run.scenario()
    train, test = run.split()
    predictor = fit_ctr(scenario, train)
    save_ftrl(run.out / "ctr.ftrl", predictor.state)
    print(f"wrote {run.out / 'ctr.ftrl'}")
    labelled = [(r.features, r.click_label) for r in test if r.click_label is not None]
    summary = [f"train_requests {len(train)}", f"test_requests {len(test)}"]
    if labelled:
        summary.append(f"test_log_loss {log_loss(labelled, predictor.state):.6f}")
    _write(run.out / "ctr.txt", "\n".join(summary) + "\n")
    print(summary[-1])


def cmd_simulate(run: Run, args) -> None:
    scenario = run.scenario()
    train, _ = run.split()
    result = run_phase1(scenario, train, run.ctr(scenario))
    write_simulation_log(run.out / "simulation.log", result.sim_log)
    print(f"wrote {run.out / 'simulation.log'}")
    write_metrics_csv(run.out / "metrics.csv", result.metrics, result.names)
    print(f"wrote {run.out / 'metrics.csv'}")
    print(_totals(result.metrics, result.names))


def cmd_train_opponent(run: Run, args) -> None:
    scenario = run.scenario()
    log_path = Path(args.log) if args.log else run.out / "simulation.log"
    sim_log = read_simulation_log(log_path)
    names = [a.name for a in scenario.roster]
    wanted = [args.agent] if args.agent else [a.name for a in scenario.roster if a.kind == "ddpg-om"]
    if not wanted:
        raise MfbidError("no ddpg-om agents in the roster; pass --agent NAME")
    for name in wanted:
        if name not in names:
            raise MfbidError(f"unknown agent {name!r}; roster is {names}")
        samples = extract_survival_dataset(sim_log, names.index(name), scenario.b_max)
        write_samples(run.out / f"survival-{name}.txt", samples)
        print(f"wrote {run.out / f'survival-{name}.txt'}")
        model = train_opponent(samples, opponent_config_for(scenario, name))
        model.save(run.model_path(name))
        print(f"wrote {run.model_path(name)}")


def _model_for(spec: str, b_max: int, train_samples):
    if spec == "uniform":
        return ConstantMarketModel.uniform(b_max)
    if spec == "km":
        return ConstantMarketModel(kaplan_meier(train_samples, PriceSpace(b_max)))
    return DasaModel.load(spec)


def cmd_eval_anlp(run: Run, args) -> None:
    b_max = run.manifest.b_max
    if not args.samples:
        raise MfbidError("eval-anlp needs --samples PATH")
    samples = read_samples(args.samples)
    train_samples = read_samples(args.train_samples) if args.train_samples else samples
    model = _model_for(args.model, b_max, train_samples)
    if model.b_max != b_max:
        raise MfbidError(f"model b_max {model.b_max} != manifest b_max {b_max}")
    evaluated = [s for s in samples if not s.censored]
    value = anlp(model, evaluated)
    label = args.model if args.model in ("uniform", "km") else Path(args.model).name
    _write(run.out / "anlp.txt", f"model {label}\nsamples {len(evaluated)}\nanlp {value:.4f}\n")
    print(f"anlp {value:.4f}")


def cmd_replay(run: Run, args) -> None:
    scenario = run.scenario()
    train, test = run.split()
    models = {}
    if not args.plain:
        for spec in scenario.roster:
            if spec.kind != "ddpg-om":
                continue
            if scenario.uniform_market:
                models[spec.name] = ConstantMarketModel.uniform(scenario.b_max)
            else:
                models[spec.name] = DasaModel.load(spec.opponent_model or run.model_path(spec.name))
    result = run_replay(scenario, train, test, run.ctr(scenario), models, with_models=not args.plain,
                        record=True)
    write_metrics_csv(run.out / "replay-metrics.csv", result.train_metrics, result.names)
    print(f"wrote {run.out / 'replay-metrics.csv'}")
    if result.test_metrics:
        write_metrics_csv(run.out / "replay-test-metrics.csv", result.test_metrics, result.names)
        print(f"wrote {run.out / 'replay-test-metrics.csv'}")
    write_simulation_log(run.out / "replay.log", result.sim_log)
    print(f"wrote {run.out / 'replay.log'}")
    _write(run.out / "convergence.txt", result.train_report.to_text(result.names))
    if result.test_report is not None:
        _write(run.out / "convergence-test.txt", result.test_report.to_text(result.names))
    for agent in result.agents:
        if hasattr(agent, "save"):
            agent.save(run.out / f"agent-{agent.name}.json")
    print(_totals(result.train_metrics, result.names))


def _epoch_histograms(sim_log: SimulationLog, b_max: int) -> list[EpochMetrics]:
    epochs = sorted(set(sim_log.epoch))
    index = {e: i for i, e in enumerate(epochs)}
    hists = np.zeros((len(epochs), b_max + 1), dtype=np.int64)
    for e, w, p in zip(sim_log.epoch, sim_log.winner, sim_log.market_price):
        if w >= 0:
            hists[index[e], p] += 1
    n = sim_log.n_agents
    zeros = np.zeros(n, dtype=np.int64)
    return [EpochMetrics(e, 0, zeros, zeros, zeros, np.zeros(n), hists[i]) for i, e in enumerate(epochs)]


def cmd_mfe_check(run: Run, args) -> None:
    scenario = run.scenario()
    b_max = scenario.b_max
    sim_log = read_simulation_log(Path(args.log) if args.log else run.out / "replay.log")
    models = []
    for spec in scenario.roster:
        if spec.kind == "ddpg-om":
            path = spec.opponent_model or run.model_path(spec.name)
            models.append(ConstantMarketModel.uniform(b_max) if scenario.uniform_market
                          else DasaModel.load(path))
    if not models:
        raise MfbidError("mfe-check needs at least one ddpg-om agent with a model")
    series = _epoch_histograms(sim_log, b_max)
    w = min(scenario.convergence_window, len(series))
    rows = sorted(set(sim_log.features))
    model_pdf = np.mean([m.pdf_batch(rows).mean(axis=0) for m in models], axis=0)
    first = total_variation(model_pdf, clearing_price_pdf(series[:w], b_max))
    final = total_variation(model_pdf, clearing_price_pdf(series[-w:], b_max))
    _write(run.out / "mfe.txt", f"window {w}\ntv_first {first:.6f}\ntv_final {final:.6f}\n")
    print(f"tv_first {first:.4f} tv_final {final:.4f}")


COMMANDS = {
    "synth-gen": (cmd_synth_gen, "generate a synthetic request log with ground truth"),
    "train-ctr": (cmd_train_ctr, "fit the FTRL click model on the training split"),
    "simulate": (cmd_simulate, "phase 1: run the roster without opponent models and log all bids"),
    "train-opponent": (cmd_train_opponent, "phase 2: fit survival opponent models from the bid log"),
    "eval-anlp": (cmd_eval_anlp, "average negative log probability of true market prices"),
    "replay": (cmd_replay, "phase 3: fresh agents learn online with their opponent models"),
    "mfe-check": (cmd_mfe_check, "distance between model and observed clearing-price distributions"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfbid", description="Multi-agent RTB simulator.")
    parser.add_argument("--version", action="version", version=f"mfbid {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--manifest", required=True, help="run manifest (INI)")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one manifest value (repeatable)")
        p.add_argument("--out", help="override the run directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("train-opponent", "mfe-check"):
            p.add_argument("--log", help="simulation log to read (default: from the run directory)")
        if name == "train-opponent":
            p.add_argument("--agent", help="train for this agent only")
        if name == "eval-anlp":
            p.add_argument("--samples", help="survival samples to evaluate on (uncensored rows)")
            p.add_argument("--model", default="uniform", help="opponent checkpoint, 'uniform' or 'km'")
            p.add_argument("--train-samples", help="samples to fit KM on (default: --samples)")
        if name == "replay":
            p.add_argument("--plain", action="store_true", help="ignore opponent models (vanilla DDPG)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = load_manifest(args.manifest, args.set, args.seed)
        out = Path(args.out) if args.out else manifest.output_dir
        COMMANDS[args.command][0](Run(manifest, out), args)
    except (MfbidError, OSError, ValueError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
