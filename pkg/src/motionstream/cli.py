"""Command-line interface.

Subcommands cover the whole offline pipeline (encode/decode/roundtrip-check,
synthetic corpus generation, codec and index fitting, offline rollout,
metric reports) plus the live server.  Structured failures exit nonzero
with a one-line JSON record on stderr.

Environment overrides: ``MOTIONSTREAM_LISTEN`` (host:port),
``MOTIONSTREAM_SKELETON``, ``MOTIONSTREAM_CODEC``, ``MOTIONSTREAM_INDEX``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import diffusion, kinematics, metrics
from .errors import MotionStreamError
from .features import FeatureLayout, decode_features, encode_features, stand_frame
from .primitives import T_FUTURE, T_HISTORY, stream_session
from .server import SessionConfig, serve

ROUNDTRIP_TOLERANCE = 1e-9


def _load_skeleton_arg(value: str | None) -> kinematics.SkeletonSpec:
    value = value or os.environ.get("MOTIONSTREAM_SKELETON") or "humanoid_29dof"
    if value in ("humanoid_29dof", "five_dof"):
        return kinematics.load_packaged_skeleton(value)
    return kinematics.load_skeleton(value)


def _path_arg(value: str | None, env: str) -> str | None:
    return value or os.environ.get(env)


def _write_json(path: str | None, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _load_manifest(directory: str) -> list[tuple[str, corpus_mod.MotionClip]]:
    manifest_path = Path(directory) / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    out = []
    for entry in manifest["clips"]:
        clip = corpus_mod.load_clip(Path(directory) / entry["file"])
        out.append((entry["label"], clip))
    return out


def _corpus_windows(labeled_clips, layout):
    labeled = [corpus_mod.LabeledClip(label, clip.motion) for label, clip in labeled_clips]
    return corpus_mod.build_corpus_index(labeled, layout, T_HISTORY, T_FUTURE)


# -- subcommand handlers -----------------------------------------------------


def _cmd_encode(args) -> int:
    clip = corpus_mod.load_clip(args.clip)
    feats, init = encode_features(clip.motion)
    corpus_mod.save_features(feats, init, args.out)
    print(f"encoded {len(feats)} feature frames (dim {feats.layout.dim}) -> {args.out}")
    return 0


def _cmd_decode(args) -> int:
    feats, init = corpus_mod.load_features(args.features)
    motion = decode_features(feats, init)
    corpus_mod.save_clip(corpus_mod.MotionClip(motion), args.out)
    print(f"decoded {len(motion)} frames -> {args.out}")
    return 0


def _cmd_roundtrip_check(args) -> int:
    clip = corpus_mod.load_clip(args.clip)
    feats, init = encode_features(clip.motion)
    rebuilt = decode_features(feats, init)
    t = len(rebuilt)
    pos_err = float(np.max(np.linalg.norm(rebuilt.root_pos - clip.motion.root_pos[:t], axis=1)))
    joint_err = float(np.max(np.abs(rebuilt.joint_pos - clip.motion.joint_pos[:t])))
    from .quat import geodesic_angle

    rot_err = float(np.max(geodesic_angle(rebuilt.root_quat, clip.motion.root_quat[:t])))
    ok = max(pos_err, joint_err, rot_err) <= ROUNDTRIP_TOLERANCE
    print(
        f"max position error {pos_err:.3e} m, max joint error {joint_err:.3e} rad, "
        f"max rotation error {rot_err:.3e} rad -> {'OK' if ok else 'FAIL'}"
    )
    return 0 if ok else 1


def _cmd_synth_corpus(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    spec = corpus_mod.SyntheticCorpusSpec(
        seed=args.seed,
        clips_per_label=args.clips_per_label,
        noise_amplitude=args.noise,
    )
    built = corpus_mod.generate_synthetic_corpus(spec, skeleton)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, labeled in enumerate(built.clips):
        name = f"clip_{i:03d}.mclip"
        clip = corpus_mod.MotionClip(
            labeled.motion, skeleton_hash=skeleton.content_hash()
        )
        corpus_mod.save_clip(clip, out_dir / name)
        duration = len(labeled.motion) / clip.frame_rate
        corpus_mod.save_spans(
            [corpus_mod.AnnotationSpan(0.0, duration, labeled.label)],
            out_dir / f"clip_{i:03d}.spans",
        )
        entries.append({"file": name, "label": labeled.label})
    manifest = {
        "version": 1,
        "skeleton": skeleton.name,
        "skeleton_hash": skeleton.content_hash(),
        "labels": list(dict.fromkeys(e["label"] for e in entries)),
        "clips": entries,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(entries)} clips for {len(manifest['labels'])} labels -> {out_dir}")
    return 0


def _cmd_fit_codec(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    layout = FeatureLayout(skeleton.n_q, 2)
    index = _corpus_windows(_load_manifest(args.corpus_dir), layout)
    codec = diffusion.fit_pca_codec(index.futures, args.latent_dim, layout)
    diffusion.save_codec(codec, args.out)
    print(f"fit PCA codec on {len(index)} windows (latent dim {args.latent_dim}) -> {args.out}")
    return 0


def _cmd_build_index(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    layout = FeatureLayout(skeleton.n_q, 2)
    index = _corpus_windows(_load_manifest(args.corpus_dir), layout)
    codec = diffusion.load_codec(_path_arg(args.codec, "MOTIONSTREAM_CODEC"))
    embedder = diffusion.HashedTextEmbedder(dim=args.embed_dim)
    denoiser = diffusion.build_retrieval_denoiser(
        index.histories, index.futures, list(index.labels), codec, embedder,
        w_history=args.w_history, w_text=args.w_text,
    )
    diffusion.save_retrieval_index(denoiser, args.out)
    print(f"indexed {len(index)} windows -> {args.out}")
    return 0


def _cmd_rollout(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    timeline = corpus_mod.load_timeline(args.stream)
    config = SessionConfig(
        codec_path=_path_arg(args.codec, "MOTIONSTREAM_CODEC"),
        index_path=_path_arg(args.index, "MOTIONSTREAM_INDEX"),
        generator=args.generator,
        cfg_scale=args.cfg_scale,
        seed=args.seed,
    )
    from .server import build_generator

    generator = build_generator(config)
    duration = args.duration if args.duration is not None else timeline.duration
    rng = np.random.default_rng(args.seed)
    result = stream_session(timeline, generator, duration, rng, stand_frame(skeleton))
    corpus_mod.save_clip(
        corpus_mod.MotionClip(result.motion, skeleton_hash=skeleton.content_hash()), args.out
    )
    if args.log:
        spans = []
        frame_rate = corpus_mod.DEFAULT_FRAME_RATE
        start = 0
        for i in range(1, len(result.frame_commands) + 1):
            if i == len(result.frame_commands) or result.frame_commands[i] != result.frame_commands[start]:
                spans.append(
                    corpus_mod.AnnotationSpan(start / frame_rate, i / frame_rate, result.frame_commands[start])
                )
                start = i
        corpus_mod.save_spans(spans, args.log)
    print(f"rolled out {len(result.motion)} frames over {duration:.2f}s -> {args.out}")
    return 0


def _cmd_eval_gen(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    layout = FeatureLayout(skeleton.n_q, 2)
    reference = _load_manifest(args.reference_dir)
    generated = _load_manifest(args.generated_dir)
    ref_index = _corpus_windows(reference, layout)
    embedder = corpus_mod.OracleEmbedder(tuple(dict.fromkeys(ref_index.labels)), ref_index)

    def embed_all(items):
        motion_emb, text_emb = [], []
        for label, clip in items:
            feats, _ = encode_features(clip.motion)
            motion_emb.append(embedder.embed_motion(feats))
            text_emb.append(embedder.embed_text(label))
        return np.stack(motion_emb), np.stack(text_emb)

    gen_motion, gen_text = embed_all(generated)
    ref_motion, _ = embed_all(reference)
    if args.export_embeddings:
        corpus_mod.save_embeddings(
            gen_motion, gen_text, [label for label, _ in generated], args.export_embeddings
        )
    rng = np.random.default_rng(args.seed)
    report = {
        "fid": metrics.fid(
            metrics.FeatureStats.from_samples(gen_motion),
            metrics.FeatureStats.from_samples(ref_motion),
        ),
        "diversity": metrics.diversity(gen_motion, None, rng) if len(gen_motion) >= 2 else None,
        "mm_dist": metrics.mm_dist(gen_motion, gen_text),
        "n_generated": len(generated),
        "n_reference": len(reference),
    }
    for k in (1, 2, 3):
        if k <= len(gen_motion):
            report[f"r_at_{k}"] = metrics.r_precision(gen_motion, gen_text, k)
    baseline_clips = [clip.motion.joint_pos.T for _, clip in reference]
    report["jerk_baseline"] = metrics.jerk_baseline(baseline_clips)
    _write_json(args.out, report)
    return 0


def _cmd_eval_track(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    policy = corpus_mod.load_clip(args.policy)
    reference = corpus_mod.load_clip(args.reference)
    pos_p, _ = kinematics.forward_kinematics_batch(
        skeleton, policy.motion.root_pos, policy.motion.root_quat, policy.motion.joint_pos
    )
    pos_r, _ = kinematics.forward_kinematics_batch(
        skeleton, reference.motion.root_pos, reference.motion.root_quat, reference.motion.joint_pos
    )
    pair = metrics.TrajectoryPair(pos_p, pos_r)
    report = metrics.tracking_metrics(pair)
    report["max_relative_error_m"] = metrics.max_relative_error(pair)
    report["success"] = bool(report["max_relative_error_m"] <= args.theta)
    report["theta_m"] = args.theta
    _write_json(args.out, report)
    return 0


def _cmd_serve(args) -> int:
    listen = os.environ.get("MOTIONSTREAM_LISTEN")
    host, port = args.host, args.port
    if listen:
        host, _, port_text = listen.partition(":")
        port = int(port_text or 0)
    config = SessionConfig(
        skeleton_path=_path_arg(args.skeleton, "MOTIONSTREAM_SKELETON"),
        codec_path=_path_arg(args.codec, "MOTIONSTREAM_CODEC"),
        index_path=_path_arg(args.index, "MOTIONSTREAM_INDEX"),
        generator=args.generator,
        cfg_scale=args.cfg_scale,
        seed=args.seed,
        host=host,
        port=port,
    )
    serve(config)
    return 0


def _cmd_fk_vectors(args) -> int:
    skeleton = _load_skeleton_arg(args.skeleton)
    rng = np.random.default_rng(args.seed)
    cases = []
    for _ in range(args.count):
        root_pos = rng.uniform(-1.0, 1.0, size=3)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        from .quat import from_axis_angle

        root_rot = from_axis_angle(axis, rng.uniform(-np.pi, np.pi))
        q = rng.uniform(-1.2, 1.2, size=skeleton.n_q)
        pose = kinematics.forward_kinematics(skeleton, root_pos, root_rot, q)
        cases.append(
            {
                "root_position": root_pos.tolist(),
                "root_quaternion": root_rot.tolist(),
                "q": q.tolist(),
                "link_positions": pose.link_positions.tolist(),
            }
        )
    from .server import skeleton_description

    _write_json(args.out, {"skeleton": skeleton_description(skeleton), "cases": cases})
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionstream", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("encode", _cmd_encode, "encode a clip into motion features")
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)

    p = add("decode", _cmd_decode, "decode motion features back into a clip")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = add("roundtrip-check", _cmd_roundtrip_check, "verify encode/decode round trip on a clip")
    p.add_argument("--clip", required=True)

    p = add("synth-corpus", _cmd_synth_corpus, "generate the synthetic labeled corpus")
    p.add_argument("--skeleton")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clips-per-label", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.004)

    p = add("fit-codec", _cmd_fit_codec, "fit the PCA latent codec on a corpus")
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--out", required=True)

    p = add("build-index", _cmd_build_index, "build the retrieval index for the denoiser")
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--codec")
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--w-history", type=float, default=1.0)
    p.add_argument("--w-text", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = add("rollout", _cmd_rollout, "run an offline session from a text-stream file")
    p.add_argument("--stream", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--codec")
    p.add_argument("--index")
    p.add_argument("--generator", default="retrieval", choices=("retrieval", "hold"))
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log")

    p = add("eval-gen", _cmd_eval_gen, "motion-quality metrics for generated clips")
    p.add_argument("--reference-dir", required=True)
    p.add_argument("--generated-dir", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--export-embeddings")
    p.add_argument("--out")

    p = add("eval-track", _cmd_eval_track, "tracking-fidelity metrics between two clips")
    p.add_argument("--policy", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--theta", type=float, default=metrics.SUCCESS_THRESHOLD_M)
    p.add_argument("--out")

    p = add("serve", _cmd_serve, "run the interactive streaming server")
    p.add_argument("--skeleton")
    p.add_argument("--codec")
    p.add_argument("--index")
    p.add_argument("--generator", default="retrieval", choices=("retrieval", "hold"))
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7543)

    p = add("fk-vectors", _cmd_fk_vectors, "export forward-kinematics test vectors")
    p.add_argument("--skeleton")
    p.add_argument("--count", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except MotionStreamError as exc:
        sys.stderr.write(json.dumps({"error": exc.code, "message": str(exc)}) + "\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(json.dumps({"error": "missing_file", "message": str(exc)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
