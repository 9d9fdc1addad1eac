from argparse import (
    SUPPRESS,
    Action,
    ArgumentParser,
    ArgumentTypeError,
    BooleanOptionalAction,
    Namespace,
    _ArgumentGroup,
)
from dataclasses import dataclass, field, fields
from typing import Any, Callable, Literal, Mapping, Sequence, TypeVar

from entitylib.types import LOAD_MODES, OOV_POLICIES

_T = TypeVar("_T")

Command = Literal["train", "evaluate", "tune-thresholds", "predict", "embed-docs", "analyze"]

ANALYZE_MODES = {
    "types": "Nearest types by cosine of their embeddings (TSV)",
    "attention": "Attention weights over the context of each mention (JSONL, optional HTML)",
}

EVAL_LOAD_MODES = {k: v for k, v in LOAD_MODES.items() if k in ("strict", "keep")}

TRAINING_PREFIX = "training."
PVDM_PREFIX = "pvdm."


@dataclass(frozen=True)
class Arguments:
    """Parsed, typed arguments from the CLI. Options of other sub-commands keep their defaults.
    `training` and `pvdm` only hold the hyper-parameters given on the command line."""

    command: Command
    config: str | None = None
    silent: bool = False
    verbose: int = 0
    deterministic: bool = False
    train: str | None = None
    dev: str | None = None
    test: str | None = None
    documents: str | None = None
    word_vectors: str | None = None
    doc_vectors: str | None = None
    oov_policy: str | None = None
    word_dim: int | None = None
    checkpoint: str | None = None
    log: str | None = None
    data: str | None = None
    fixed_threshold: float | None = None
    """`None` uses the thresholds stored in the checkpoint."""
    no_fallback: bool = False
    dump: str | None = None
    per_type: str | None = None
    unknown_types: str | None = None
    ontology: str | None = None
    export: str | None = None
    input: str | None = None
    output: str | None = None
    infer_documents: str | None = None
    mode: str | None = None
    k: int = 5
    html: str | None = None
    training: dict[str, Any] = field(default_factory=dict)
    pvdm: dict[str, Any] = field(default_factory=dict)


class ListableAction(Action):
    """Argparse action that shows the supported choices for an argument if the value is `list`."""

    def __init__(
        self,
        option_strings: Sequence[str],
        dest: str,
        nargs: int | Literal["?", "*", "+"] | None = None,
        default: _T | None = None,
        type: Callable[[str], _T] | None = None,
        choices: Mapping[str, str] | None = None,
        required: bool = False,
        help: str | None = None,
        metavar: str | tuple[str, ...] | None = None,
    ) -> None:
        if choices is None or not isinstance(choices, Mapping):
            raise ValueError("choices must be a mapping of option names -> descriptions")
        super().__init__(
            option_strings=option_strings,
            dest=dest,
            nargs=nargs,
            default=default,
            type=type,
            choices=set(choices.keys()) | {"list"},
            required=required,
            help=help,
            metavar=metavar,
        )
        self._choices_map = choices

    def __call__(
        self,
        parser: ArgumentParser,
        namespace: Namespace,
        values: str | Sequence[Any] | None,
        option_string: str | None = None,
    ) -> None:
        setattr(namespace, self.dest, values)
        if values is None:
            values = []
        elif isinstance(values, str):
            values = [values]
        if "list" in values:
            print(f"Supported choices for {self.metavar or self.dest}:")
            for k, v in self._choices_map.items():
                print(f"  {k}: {v}")
            parser.exit()


def int_min(min_val: int = 0) -> Callable[[str], int]:
    """Returns a function that converts a string to an integer, ensuring its value is >= min_val."""

    def int_min_inner(value: str) -> int:
        try:
            n = int(value)
        except ValueError as e:
            raise ArgumentTypeError(str(e))
        if n < min_val:
            raise ArgumentTypeError(f"should be an integer >= {min_val}")
        return n

    return int_min_inner


def float_range(
    low: float, high: float, low_inclusive: bool = True, high_inclusive: bool = False
) -> Callable[[str], float]:
    """Returns a function that converts a string to a float within the given interval."""
    interval = f"{'[' if low_inclusive else '('}{low}, {high}{']' if high_inclusive else ')'}"

    def float_range_inner(value: str) -> float:
        try:
            x = float(value)
        except ValueError as e:
            raise ArgumentTypeError(str(e))
        above = x >= low if low_inclusive else x > low
        below = x <= high if high_inclusive else x < high
        if not (above and below):
            raise ArgumentTypeError(f"should be a number in {interval}")
        return x

    return float_range_inner


def threshold_mode(value: str) -> float | None:
    """`checkpoint` (stored thresholds) or `fixed:X` (X in (0, 1) for every type)."""
    if value == "checkpoint":
        return None
    if value.startswith("fixed:"):
        return float_range(0.0, 1.0, low_inclusive=False)(value[len("fixed:") :])
    raise ArgumentTypeError("expected 'checkpoint' or 'fixed:X'")


def window_size(value: str) -> int | None:
    """A non-negative window size, or `none` for the whole sentence."""
    if value.lower() == "none":
        return None
    return int_min(0)(value)


def _add_training_options(grp: _ArgumentGroup) -> None:
    def option(flag: str, help: str, **kwargs: Any) -> None:
        dest = TRAINING_PREFIX + flag.removeprefix("--").replace("-", "_")
        grp.add_argument(flag, dest=dest, default=SUPPRESS, help=help, **kwargs)

    option("--learning-rate", "Adam step size (default: 0.001)", type=float_range(0.0, 1.0, False))
    option("--beta1", "Adam first moment decay (default: 0.9)", type=float_range(0.0, 1.0))
    option("--beta2", "Adam second moment decay (default: 0.999)", type=float_range(0.0, 1.0))
    option("--adam-eps", "Adam epsilon (default: 1e-8)", type=float)
    option("--batch-size", "Mentions per mini-batch (default: 200)", type=int_min(1))
    option("--dropout-rate", "Dropout on the features (default: 0.5)", type=float_range(0.0, 1.0))
    option("--max-epochs", "Maximum number of epochs (default: 50)", type=int_min(1))
    option("--patience", "Epochs without dev improvement before stopping", type=int_min(0))
    option("--seed", "Random seed of the run (default: 0)", type=int_min(0))
    option(
        "--window",
        "Context tokens on each side of the mention, or 'none' (default: 10)",
        type=window_size,
    )
    option(
        "--doc-context",
        "Use the document-level context (default: yes)",
        action=BooleanOptionalAction,
    )
    option(
        "--fine-tune-embeddings",
        "Update the word vectors during training (default: no)",
        action=BooleanOptionalAction,
    )
    option("--init-range", "Initial weights are drawn from U(-r, r)", type=float)
    option("--hidden-size", "LSTM units per direction (default: 100)", type=int_min(1))
    option("--num-layers", "Stacked bi-LSTM layers (default: 2)", type=int_min(1))
    option("--doc-dim", "Document vector size without document vectors", type=int_min(1))
    option("--doc-hidden", "Hidden size of the document encoder (default: 70)", type=int_min(1))
    option(
        "--fallback",
        "Predict the most probable type when no type passes its threshold (default: yes)",
        action=BooleanOptionalAction,
    )
    option("--dtype", "Model precision (default: float32)", choices=["float32", "float64"])
    option("--workers", "Threads used for evaluation batches (default: 1)", type=int_min(1))
    option("--eval-batch-size", "Mentions per evaluation batch", type=int_min(1))
    option(
        "--tune-thresholds",
        "Tune per-type thresholds on dev after training (default: yes)",
        action=BooleanOptionalAction,
    )


def _add_pvdm_options(grp: _ArgumentGroup) -> None:
    def option(flag: str, help: str, type: Callable[[str], Any]) -> None:
        dest = PVDM_PREFIX + flag.removeprefix("--").replace("-", "_")
        grp.add_argument(flag, dest=dest, default=SUPPRESS, type=type, help=help)

    option("--dim", "Document vector size (default: 50)", int_min(1))
    option("--context-size", "Context words around each target (default: 5)", int_min(0))
    option("--negative-samples", "Noise words per target (default: 5)", int_min(1))
    option("--epochs", "Training epochs (default: 20)", int_min(0))
    option("--lr", "Initial learning rate (default: 0.025)", float_range(0.0, 1.0, False))
    option("--min-lr", "Final learning rate (default: 0.0001)", float_range(0.0, 1.0))
    option("--min-count", "Minimum word frequency (default: 2)", int_min(1))
    option("--seed", "Random seed (default: 0)", int_min(0))
    option("--infer-steps", "Inference epochs for unseen documents", int_min(1))


def _add_unknown_types(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--unknown-types",
        action=ListableAction,
        choices=EVAL_LOAD_MODES,
        help="How to treat gold types outside the ontology (use '--unknown-types list')",
    )


def _build_parser() -> ArgumentParser:
    parser = ArgumentParser(description="Fine-grained entity typing with document-level context")
    parser.add_argument(
        "-c",
        "--config",
        help="The YAML configuration file (default: config.yaml next to this script)",
    )
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Force single-threaded execution",
    )
    xgrp_verbosity = parser.add_mutually_exclusive_group()
    xgrp_verbosity.add_argument(
        "-s",
        "--silent",
        action="store_true",
        help="Suppress output",
    )
    xgrp_verbosity.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Verbose output (use multiple times for more verbosity)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_train = sub.add_parser("train", help="Train a model and write a checkpoint")
    grp_data = p_train.add_argument_group("Data options")
    grp_data.add_argument("--train", help="Training mentions (JSON lines)")
    grp_data.add_argument("--dev", help="Dev mentions (JSON lines)")
    grp_data.add_argument("--test", help="Test mentions, scored after training (JSON lines)")
    grp_data.add_argument("--documents", help="Document store (JSON lines)")
    grp_data.add_argument(
        "--word-vectors", help="Pre-trained word vectors (GloVe-compatible text)"
    )
    grp_data.add_argument(
        "--doc-vectors",
        help="Document vectors (default: trained with PV-DM on --documents)",
    )
    grp_data.add_argument(
        "--oov-policy",
        action=ListableAction,
        choices=OOV_POLICIES,
        help="Lookup of unknown tokens (use '--oov-policy list' to list policies)",
    )
    grp_data.add_argument("--word-dim", type=int_min(1), help="Expected word vector size")
    grp_data.add_argument("--unknown-types", choices=list(EVAL_LOAD_MODES))
    grp_out = p_train.add_argument_group("Output options")
    grp_out.add_argument("--checkpoint", required=True, help="The checkpoint file to write")
    grp_out.add_argument("--log", help="The training log to write (TSV)")
    _add_training_options(p_train.add_argument_group("Hyper-parameters"))

    p_eval = sub.add_parser("evaluate", help="Score a checkpoint on a labelled split")
    p_eval.add_argument("--checkpoint", required=True, help="The checkpoint to evaluate")
    p_eval.add_argument("--data", required=True, help="Labelled mentions (JSON lines)")
    p_eval.add_argument(
        "--thresholds",
        dest="fixed_threshold",
        type=threshold_mode,
        default=None,
        metavar="checkpoint|fixed:X",
        help="Use the stored thresholds (default) or one fixed threshold for every type",
    )
    p_eval.add_argument(
        "--no-fallback",
        action="store_true",
        help="Allow empty predictions (no argmax fallback)",
    )
    p_eval.add_argument("--dump", help="Write per-mention predictions (JSON lines)")
    p_eval.add_argument("--per-type", help="Write per-type TP/FP/FN counts (TSV)")
    p_eval.add_argument("--doc-vectors", help="Extra document vectors (eg. for unseen documents)")
    p_eval.add_argument("--ontology", help="Ontology file the checkpoint must match")
    _add_unknown_types(p_eval)

    p_tune = sub.add_parser("tune-thresholds", help="Tune per-type thresholds on dev")
    p_tune.add_argument("--checkpoint", required=True, help="The checkpoint to update")
    p_tune.add_argument("--dev", help="Dev mentions (default: from the config)")
    p_tune.add_argument("--export", help="Also write the thresholds as text")
    p_tune.add_argument("--doc-vectors", help="Extra document vectors")
    _add_unknown_types(p_tune)

    p_predict = sub.add_parser("predict", help="Predict the types of unlabelled mentions")
    p_predict.add_argument("--checkpoint", required=True, help="The checkpoint to use")
    p_predict.add_argument("--input", required=True, help="Mentions (JSON lines, types optional)")
    p_predict.add_argument("--output", required=True, help="Predictions (JSON lines)")
    p_predict.add_argument("--doc-vectors", help="Extra document vectors")

    p_embed = sub.add_parser("embed-docs", help="Train PV-DM document vectors")
    p_embed.add_argument("--documents", help="Document store (default: from the config)")
    p_embed.add_argument("--output", required=True, help="Document vectors file to write")
    p_embed.add_argument(
        "--infer-documents",
        help="More documents whose vectors are inferred with the trained model",
    )
    _add_pvdm_options(p_embed.add_argument_group("PV-DM hyper-parameters"))

    p_analyze = sub.add_parser("analyze", help="Inspect a trained model")
    p_analyze.add_argument("--checkpoint", required=True, help="The checkpoint to inspect")
    p_analyze.add_argument(
        "--mode",
        required=True,
        action=ListableAction,
        choices=ANALYZE_MODES,
        help="What to analyze (use '--mode list' to list modes)",
    )
    p_analyze.add_argument("-k", type=int_min(1), default=5, help="Neighbours per type")
    p_analyze.add_argument("--data", help="Mentions to trace (attention mode)")
    p_analyze.add_argument("--output", required=True, help="The TSV / JSONL file to write")
    p_analyze.add_argument("--html", help="Also render the attention traces as HTML")
    p_analyze.add_argument("--doc-vectors", help="Extra document vectors")
    _add_unknown_types(p_analyze)
    return parser


def parse_args(argv: Sequence[str] | None = None) -> Arguments:
    """Parses the CLI arguments using argparse, and returns them as a typed dataclass."""
    parser = _build_parser()
    args = vars(parser.parse_args(argv))

    if args["command"] == "analyze":
        if args["mode"] == "attention" and args["data"] is None:
            parser.error("--mode attention needs --data")
        if args["mode"] == "types" and args["html"] is not None:
            parser.error("--html is only available with --mode attention")

    training = {
        k.removeprefix(TRAINING_PREFIX): v for k, v in args.items() if k.startswith(TRAINING_PREFIX)
    }
    pvdm = {k.removeprefix(PVDM_PREFIX): v for k, v in args.items() if k.startswith(PVDM_PREFIX)}
    known = {f.name for f in fields(Arguments)} - {"training", "pvdm"}
    values = {k: v for k, v in args.items() if k in known}
    return Arguments(**values, training=training, pvdm=pvdm)
