#!/usr/bin/env python3

import logging
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from entitylib import (
    DocEmbeddingTable,
    Mention,
    Model,
    TypeOntology,
    attention_trace,
    evaluate,
    gold_paths,
    infer_doc_vector,
    load_checkpoint,
    load_dataset,
    load_doc_vectors,
    load_documents,
    load_mentions,
    load_word_vectors,
    predict_probabilities,
    render_traces_html,
    save_checkpoint,
    score_mentions,
    train_loop,
    train_pvdm,
    type_similarity,
    write_doc_vectors,
    write_predictions,
    write_similarity_tsv,
    write_thresholds,
    write_traces_jsonl,
)
from entitylib.classifier import predict_batch
from entitylib.metrics import per_type_counts, write_per_type_tsv
from entitylib.training import tune_model_thresholds
from entitylib.types import LoadMode, OovPolicy
from entitylib.utils import resolve_data_path
from utils.argparse_utils import Arguments, parse_args
from utils.colored_logging import (
    print_error,
    print_info,
    print_scores,
    print_success,
    print_warning,
    setup_logging,
)
from utils.config_parser import ConfigError, RunConfig

SCRIPT_DIR = Path(__file__ if "__file__" in globals() else sys.argv[0]).parent

LOGGER = logging.getLogger("main")


def _given(**values: Any) -> dict[str, Any]:
    return {k: v for k, v in values.items() if v is not None}


def load_run_config(args: Arguments) -> RunConfig:
    """Defaults < config file < command-line flags."""
    if args.config is not None:
        config = RunConfig.from_yaml_file(args.config)
    elif (SCRIPT_DIR / "config.yaml").is_file():
        config = RunConfig.from_yaml_file(SCRIPT_DIR / "config.yaml")
    else:
        config = RunConfig()
    config = config.with_overrides(
        "data",
        **_given(
            train=args.train,
            dev=args.dev,
            test=args.test,
            documents=args.documents,
            unknown_types=args.unknown_types,
        ),
    )
    config = config.with_overrides(
        "embeddings",
        **_given(
            word_vectors=args.word_vectors,
            doc_vectors=args.doc_vectors,
            oov_policy=args.oov_policy,
            word_dim=args.word_dim,
        ),
    )
    config = config.with_overrides("training", **args.training)
    config = config.with_overrides("pvdm", **args.pvdm)
    if args.deterministic:
        config = config.with_overrides("training", workers=1)
    return config


def _required(value: str | None, what: str) -> Path:
    if value is None:
        raise ConfigError(f"No {what} given (use the flag or the config file)")
    return resolve_data_path(value)


def _checkpoint(args: Arguments) -> Path:
    return _required(args.checkpoint, "checkpoint")


def _load_mode(config: RunConfig) -> LoadMode:
    return "keep" if config.data.unknown_types == "keep" else "strict"


def _with_doc_vectors(model: Model, path: str | None) -> Model:
    if path is not None:
        extra = load_doc_vectors(resolve_data_path(path), model.documents.dim)
        model.documents = model.documents.merged(extra)
        LOGGER.info(f"Added {len(extra)} document vectors from {path}")
    return model


def _load_split(path: Path, model: Model, mode: LoadMode) -> list[Mention]:
    mentions = load_mentions(path, model.ontology, mode)
    print_info(f"Loaded {len(mentions)} mentions from {path}")
    return mentions


def _warn_unknown_tokens(model: Model, mentions: list[Mention]) -> None:
    unknown = model.unknown_tokens(mentions)
    if unknown:
        common = ", ".join(tok for tok, _ in unknown.most_common(5))
        print_warning(
            f"{len(unknown)} distinct context tokens ({sum(unknown.values())} occurrences) "
            f"have no word vector and read as zeros, most common: {common}"
        )


def cmd_train(args: Arguments, config: RunConfig) -> None:
    data = config.data
    dataset = load_dataset(
        _required(data.train, "training data"),
        _required(data.dev, "dev data"),
        None if data.test is None else resolve_data_path(data.test),
        None if data.documents is None else resolve_data_path(data.documents),
        _load_mode(config),
    )
    print_info(
        f"Loaded {len(dataset.train)} train / {len(dataset.dev)} dev / {len(dataset.test)} test "
        f"mentions, {len(dataset.ontology)} types"
    )
    emb = config.embeddings
    words = load_word_vectors(
        _required(emb.word_vectors, "word vectors"),
        expected_dim=emb.word_dim,
        oov_policy=OovPolicy.from_str(emb.oov_policy),
        vocabulary=dataset.vocabulary(),
        trainable=config.training.fine_tune_embeddings,
    )

    documents: DocEmbeddingTable | None = None
    if not config.training.doc_context:
        print_info("Document-level context disabled")
    elif emb.doc_vectors is not None:
        documents = load_doc_vectors(resolve_data_path(emb.doc_vectors))
    elif dataset.documents:
        print_info(f"Training PV-DM on {len(dataset.documents)} documents...")
        documents = train_pvdm(list(dataset.documents.values()), config.pvdm).doc_table()
    else:
        print_warning("No documents and no document vectors, the document context is zero")

    print_info(f"Training on {len(dataset.train)} mentions...")
    log_path = None if args.log is None else Path(args.log)
    result = train_loop(
        dataset,
        words,
        config.training,
        documents,
        log_path=log_path,
        threshold_options={
            "max_passes": config.thresholds.max_passes,
            "joint_search_limit": config.thresholds.joint_search_limit,
        },
    )
    save_checkpoint(result.model, Path(str(args.checkpoint)))
    print_success(f"Selected epoch {result.best_epoch}, checkpoint written to {args.checkpoint}")
    if result.tuning is not None:
        print_info(f"Thresholds tuned: {result.tuning.summary()}")
    print_scores("Dev scores", score_mentions(result.model, dataset.dev).to_dict())
    if dataset.test:
        print_scores("Test scores", score_mentions(result.model, dataset.test).to_dict())


def cmd_evaluate(args: Arguments, config: RunConfig) -> None:
    expected = None if args.ontology is None else TypeOntology.load(args.ontology)
    model = _with_doc_vectors(load_checkpoint(_checkpoint(args), expected), args.doc_vectors)
    mentions = _load_split(_required(args.data, "data"), model, _load_mode(config))
    _warn_unknown_tokens(model, mentions)

    probabilities = predict_probabilities(model, mentions, workers=config.training.workers)
    if args.fixed_threshold is None:
        thresholds = model.thresholds
    else:
        thresholds = np.full(len(model.ontology), args.fixed_threshold)
    fallback = model.config.fallback and not args.no_fallback
    results = predict_batch(probabilities, thresholds, fallback)
    preds = [{model.ontology.types[t] for t in r.predicted} for r in results]
    golds = [gold_paths(m, model.ontology) for m in mentions]
    report = evaluate(preds, golds)

    if args.dump is not None:
        write_predictions(args.dump, results, golds, model.ontology)
    if args.per_type is not None:
        write_per_type_tsv(args.per_type, per_type_counts(preds, golds))
    print_scores(f"Scores on {len(mentions)} mentions", report.to_dict())
    print(report.to_json())


def cmd_tune_thresholds(args: Arguments, config: RunConfig) -> None:
    model = _with_doc_vectors(load_checkpoint(_checkpoint(args)), args.doc_vectors)
    dev = _load_split(_required(config.data.dev, "dev data"), model, _load_mode(config))
    if not dev:
        raise ValueError("Threshold tuning needs a non-empty dev set")
    probabilities = predict_probabilities(model, dev, workers=config.training.workers)
    report = tune_model_thresholds(
        model,
        dev,
        probabilities,
        max_passes=config.thresholds.max_passes,
        joint_search_limit=config.thresholds.joint_search_limit,
    )
    save_checkpoint(model, _checkpoint(args))
    if args.export is not None:
        write_thresholds(args.export, model.thresholds, model.ontology)
    print_success(f"Thresholds tuned: {report.summary()}")


def cmd_predict(args: Arguments, config: RunConfig) -> None:
    model = _with_doc_vectors(load_checkpoint(_checkpoint(args)), args.doc_vectors)
    mentions = _load_split(_required(args.input, "input"), model, "unlabeled")
    _warn_unknown_tokens(model, mentions)
    probabilities = predict_probabilities(model, mentions, workers=config.training.workers)
    results = predict_batch(probabilities, model.thresholds, model.config.fallback)
    golds = [gold_paths(m, model.ontology) for m in mentions]
    write_predictions(_required(args.output, "output"), results, golds, model.ontology)
    print_success(f"Wrote {len(results)} predictions to {args.output}")


def cmd_embed_docs(args: Arguments, config: RunConfig) -> None:
    documents = load_documents(_required(config.data.documents, "document store"))
    print_info(f"Training PV-DM ({config.pvdm.dim} dimensions) on {len(documents)} documents...")
    model = train_pvdm(list(documents.values()), config.pvdm)
    table = model.doc_table()
    if args.infer_documents is not None:
        unseen = load_documents(resolve_data_path(args.infer_documents))
        inferred = {doc_id: infer_doc_vector(model, doc.tokens) for doc_id, doc in unseen.items()}
        table = table.merged(DocEmbeddingTable.from_dict(inferred, model.dim))
        print_info(f"Inferred vectors for {len(inferred)} unseen documents")
    write_doc_vectors(_required(args.output, "output"), table)
    print_success(f"Wrote {len(table)} document vectors to {args.output}")


def cmd_analyze(args: Arguments, config: RunConfig) -> None:
    model = _with_doc_vectors(load_checkpoint(_checkpoint(args)), args.doc_vectors)
    output = _required(args.output, "output")
    if args.mode == "types":
        rows = type_similarity(model.classifier, model.ontology, args.k)
        write_similarity_tsv(output, rows)
        print_success(f"Wrote the nearest types of {len(rows)} types to {output}")
        return

    mentions = _load_split(_required(args.data, "data"), model, _load_mode(config))
    traces = [attention_trace(model, m) for m in mentions]
    write_traces_jsonl(output, traces)
    if args.html is not None:
        render_traces_html(args.html, traces)
    print_success(f"Wrote {len(traces)} attention traces to {output}")


COMMANDS: dict[str, Callable[[Arguments, RunConfig], None]] = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "tune-thresholds": cmd_tune_thresholds,
    "predict": cmd_predict,
    "embed-docs": cmd_embed_docs,
    "analyze": cmd_analyze,
}


def main() -> None:
    """The main function of the script.
    Parses the arguments, merges them into the configuration and runs the sub-command."""
    args = parse_args()
    setup_logging(args.verbose, args.silent)

    try:
        config = load_run_config(args)
        COMMANDS[args.command](args, config)
    except (ValueError, OSError) as e:
        print_error(str(e), exit_code=1)


if __name__ == "__main__":
    main()
