import argparse
import json
from pathlib import Path

from imgcred.cli.common import add_command, output_dir, resolve_config
from imgcred.core.errors import UsageError
from imgcred.core.workspace import write_json
from imgcred.schemas.instance_schemas import Dataset, Domain
from imgcred.services import dedup_service, feature_service, manifest_service, pattern_service, synth_service
from imgcred.services.image_service import passes_size_filter

MANIFEST = "manifest.jsonl"


def register(subparsers) -> None:
    synth = add_command(subparsers, "synth", "generate the synthetic domain-shift benchmark")
    synth.add_argument("--spec", type=Path, help="JSON document with benchmark (shift) fields")
    synth.add_argument("--render-images", action="store_true", default=None, help="also write 16x16 blob images")
    synth.add_argument("--out", type=Path, required=True, help="output directory")
    synth.set_defaults(handler=run_synth)

    dedup = add_command(subparsers, "dedup", "drop small/elongated images and near-duplicates")
    dedup.add_argument("--manifest", type=Path, required=True)
    dedup.add_argument("--planes", type=int)
    dedup.add_argument("--threshold", type=int, help="max Hamming distance treated as duplicate")
    dedup.add_argument("--min-side", type=int)
    dedup.add_argument("--max-aspect", type=float)
    dedup.add_argument("--out", type=Path, required=True, help="output directory")
    dedup.set_defaults(handler=run_dedup)

    weak = add_command(subparsers, "weak-label", "build the auxiliary set from posts and a pattern file")
    weak.add_argument("--posts", type=Path, required=True, help="JSON-lines posts {id, text, image?}")
    weak.add_argument("--patterns", type=Path, required=True)
    weak.add_argument("--trusted", type=Path, help="JSON-lines posts from trusted sources (labeled real)")
    weak.add_argument("--out", type=Path, required=True, help="output directory")
    weak.set_defaults(handler=run_weak_label)

    featurize = add_command(subparsers, "featurize", "compute text or bag-of-visual-words features")
    featurize.add_argument("kind", choices=["text", "bovw"])
    featurize.add_argument("--manifest", type=Path, required=True)
    featurize.add_argument("--lexicons", type=Path, help="directory of <category>.txt lexicon files")
    featurize.add_argument("--k", type=int, help="vocabulary size (bovw)")
    featurize.add_argument("--out", type=Path, required=True, help="output directory")
    featurize.set_defaults(handler=run_featurize)


def run_synth(args: argparse.Namespace) -> int:
    shift = {}
    if args.spec is not None:
        try:
            shift = json.loads(args.spec.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"spec file not found: {args.spec}")
        except json.JSONDecodeError as e:
            raise UsageError(f"spec file {args.spec} is not valid JSON: {e}")
    if args.render_images:
        shift["render_images"] = True
    config = resolve_config(args, {"shift": shift})
    with output_dir(args.out, config, "synth") as out:
        dataset = synth_service.synth_shift(config.shift, image_dir=out / "images")
        manifest_service.save_manifest(dataset, out / MANIFEST)
    return 0


def run_dedup(args: argparse.Namespace) -> int:
    config = resolve_config(args, {"dedup": {
        "planes": args.planes, "threshold": args.threshold, "min_side": args.min_side, "max_aspect": args.max_aspect,
    }})
    cfg = config.dedup
    dataset = manifest_service.load_manifest(args.manifest)
    with output_dir(args.out, config, "dedup") as out:
        with_images = [inst for inst in dataset.instances if inst.image_path is not None]
        images = manifest_service.load_images(with_images)
        sized = [i for i, img in enumerate(images) if passes_size_filter(img, cfg.min_side, cfg.max_aspect)]
        kept = [sized[i] for i in dedup_service.dedup([images[i] for i in sized], cfg.planes, cfg.threshold,
                                                      seed=config.seed)]
        kept_ids = {with_images[i].id for i in kept}
        too_small = sorted({inst.id for inst in with_images} - {with_images[i].id for i in sized})
        duplicates = sorted({with_images[i].id for i in sized} - kept_ids)
        survivors = [inst for inst in dataset.instances if inst.image_path is None or inst.id in kept_ids]
        manifest_service.save_manifest(Dataset(instances=survivors), out / MANIFEST)
        write_json(out / "dedup_report.json", {
            "kept": len(survivors),
            "removed_duplicates": duplicates,
            "removed_size": too_small,
        })
    return 0


def run_weak_label(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    posts = pattern_service.load_posts(args.posts)
    trusted = pattern_service.load_posts(args.trusted) if args.trusted else []
    patterns = pattern_service.load_patterns(args.patterns)
    image_paths = {}
    for source, records in ((args.posts, posts), (args.trusted, trusted)):
        for record in records:
            if record.image is not None:
                image_paths[record.id] = str(Path(source).resolve().parent / record.image)
    with output_dir(args.out, config, "weak-label") as out:
        dataset = pattern_service.weak_label_dataset(
            [(p.id, p.text) for p in posts], patterns,
            trusted_real=[(p.id, p.text) for p in trusted],
            image_paths=image_paths,
        )
        manifest_service.save_manifest(dataset, out / MANIFEST)
    return 0


def run_featurize(args: argparse.Namespace) -> int:
    config = resolve_config(args, {"paths": {"lexicons": args.lexicons}, "bovw": {"k": args.k}})
    dataset = manifest_service.load_manifest(args.manifest)
    instances = dataset.instances
    with output_dir(args.out, config, f"featurize {args.kind}") as out:
        if args.kind == "text":
            lexicons = feature_service.Lexicons.load(config.paths.lexicons)
            texts = [inst.text or "" for inst in instances]
            matrix = feature_service.text_feature_matrix(texts, lexicons)
            columns = list(feature_service.TEXT_FEATURE_NAMES)
        else:
            bovw = config.bovw
            images = manifest_service.load_images(instances)
            # vocabulary from training-side images only
            fit_on = [img for inst, img in zip(instances, images) if inst.domain != Domain.TARGET_TEST]
            descriptors = [feature_service.extract_descriptors(img, bovw.grid_step, bovw.patch) for img in fit_on]
            vocab = feature_service.build_vocabulary(
                feature_service.stack_descriptors(descriptors), bovw.k, seed=config.seed, max_iters=bovw.max_iters
            )
            matrix = feature_service.bovw_feature_matrix(images, vocab, bovw.grid_step, bovw.patch)
            columns = [f"word_{j}" for j in range(vocab.k)]
            write_json(out / "vocabulary.json", {
                "centroids": vocab.centroids.tolist(),
                "objective_history": vocab.objective_history,
            })
        feature_service.write_feature_csv(out / "features.csv", [inst.id for inst in instances], matrix, columns,
                                          labels=[inst.label for inst in instances])
        featured = [inst.model_copy(update={"features": row.tolist()}) for inst, row in zip(instances, matrix)]
        manifest_service.save_manifest(Dataset(instances=featured), out / MANIFEST)
    return 0
