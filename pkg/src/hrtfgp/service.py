"""HTTP session service for human listening tests.

Thin JSON-over-HTTP shell around `active.Session`: creates sessions from a
target plan, serves the current query as 16-bit PCM stereo WAV (plus a dry
reference noise burst), accepts reported directions, and persists every round
to an append-only JSON-lines log before acknowledging. Sessions are keyed in
memory and rehydrated from their config + log files on startup, so a restart
mid-session reproduces the identical next query.

Endpoints (all under /v1):

    POST /sessions                      create (idempotency_key supported)
    GET  /sessions/{id}/query           current round metadata + audio URLs
    GET  /sessions/{id}/query/render.wav   spatialized burst
    GET  /sessions/{id}/query/noise.wav    dry reference burst
    POST /sessions/{id}/response        {round, azimuth, elevation}
    GET  /sessions/{id}/state           full summary
"""

import io
import json
import os
import threading
import uuid
from hashlib import sha1

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from scipy.io import wavfile

from .active import Session, uniform_targets
from .container import write_manifest
from .dataset import Direction, fibonacci_grid, synth_sphere_hrtf
from .features import extract_features, render_binaural
from .kernels import KernelSpec
from .mog import (load_mog, mog_condition, mog_fit, nonindividualized,
                  pca_encode, pca_fit, sample_candidates, save_mog)

DEFAULT_SAMPLE_RATE = 44100.0
BURST_SECONDS = 1.0
MAX_POOL = 20000


def build_demo_generator(seed: int = 0, n_dirs: int = 128, d: int = 32,
                         n_subjects: int = 6, q: int = 8, m: int = 4,
                         sample_rate: float = DEFAULT_SAMPLE_RATE):
    """Small deterministic generative model for demo/test deployments:
    a synthetic population of sphere-model subjects reduced to principal
    components and fit with a joint mixture over (components, direction)."""
    grid = fibonacci_grid(n_dirs)
    dirs = grid.as_matrix()
    rows = []
    targets = []
    for radius in np.linspace(0.07, 0.105, n_subjects):
        hrtf = synth_sphere_hrtf(grid, float(radius), d, sample_rate)
        fm = extract_features(hrtf, "MP")
        rows.append(fm.X)
        targets.append(dirs)
    mp = np.vstack(rows)
    codec = pca_fit(mp, q)
    z = np.hstack([pca_encode(codec, mp), np.vstack(targets)])
    model, _ = mog_fit(z, m, seed=seed, q=q)
    return codec, model


class SessionStore:
    """In-memory session registry backed by per-session config + log files."""

    def __init__(self, data_dir, codec=None, model=None,
                 sample_rate: float = DEFAULT_SAMPLE_RATE, demo_seed: int = 0):
        self.data_dir = data_dir
        self.sample_rate = float(sample_rate)
        os.makedirs(os.path.join(data_dir, "sessions"), exist_ok=True)
        # the generator always round-trips through its saved f32 form so a
        # restarted process reproduces byte-identical pools and queries
        path = os.path.join(data_dir, "generator.json")
        if not os.path.exists(path):
            if codec is None or model is None:
                codec, model = build_demo_generator(seed=demo_seed)
            save_mog(path, model, codec)
        self.model, self.codec = load_mog(path)
        self.sessions = {}
        self.configs = {}
        self.locks = {}
        self.by_key = {}
        self._rehydrate()

    # -- construction ------------------------------------------------------

    def _session_paths(self, session_id):
        base = os.path.join(self.data_dir, "sessions", session_id)
        return base + ".json", base + ".log.jsonl"

    def _build_session(self, config, log_path) -> Session:
        targets = uniform_targets([
            Direction.from_angles(t["azimuth"], t["elevation"]).as_array()
            for t in config["targets"]
        ])
        pools = []
        nonind = []
        for i in range(targets.p):
            cond = mog_condition(self.model, targets.U[i])
            pools.append(sample_candidates(
                cond, self.codec, config["pool_size"], seed=config["seed"] + i))
            nonind.append(nonindividualized(cond, self.codec))
        pool_all = np.vstack(pools)
        ell = np.maximum(pool_all.std(axis=0), 1e-3) * np.sqrt(pool_all.shape[1])
        spec = KernelSpec("inf", ell, 1.0)
        return Session(spec, 0.05, targets, config["rounds_per_target"],
                       pools, np.vstack(nonind), log_path=log_path,
                       session_id=config["session_id"])

    def _rehydrate(self):
        sess_dir = os.path.join(self.data_dir, "sessions")
        for name in sorted(os.listdir(sess_dir)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(sess_dir, name), encoding="utf-8") as fh:
                config = json.load(fh)
            sid = config["session_id"]
            cfg_path, log_path = self._session_paths(sid)
            session = self._build_session(config, log_path=None)
            if os.path.exists(log_path):
                records = []
                with open(log_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            records.append(json.loads(line))
                session.replay(records)
            session.log_path = log_path
            self.sessions[sid] = session
            self.configs[sid] = config
            self.locks[sid] = threading.Lock()
            if config.get("idempotency_key"):
                self.by_key[config["idempotency_key"]] = sid

    def create(self, body: dict) -> dict:
        targets = body.get("targets")
        if not isinstance(targets, list) or not targets:
            raise HTTPException(400, "target plan must be a nonempty list")
        for t in targets:
            if not isinstance(t, dict) or "azimuth" not in t or "elevation" not in t:
                raise HTTPException(400, "each target needs azimuth and elevation")
        rounds = body.get("rounds_per_target", 10)
        pool_size = body.get("pool_size", 200)
        seed = body.get("seed", 0)
        if not (isinstance(rounds, int) and rounds >= 1):
            raise HTTPException(400, "rounds_per_target must be a positive integer")
        if not (isinstance(pool_size, int) and 1 <= pool_size <= MAX_POOL):
            raise HTTPException(400, f"pool_size must lie in [1, {MAX_POOL}]")
        key = body.get("idempotency_key")
        if key and key in self.by_key:
            return self.descriptor(self.by_key[key])

        session_id = sha1(key.encode()).hexdigest()[:16] if key else uuid.uuid4().hex[:16]
        config = {
            "session_id": session_id,
            "targets": [{"azimuth": float(t["azimuth"]),
                         "elevation": float(t["elevation"])} for t in targets],
            "rounds_per_target": rounds,
            "pool_size": pool_size,
            "seed": seed,
            "idempotency_key": key,
        }
        cfg_path, log_path = self._session_paths(session_id)
        try:
            session = self._build_session(config, log_path)
        except Exception as exc:
            raise HTTPException(400, f"invalid plan: {exc}")
        write_manifest(cfg_path, config)
        self.sessions[session_id] = session
        self.configs[session_id] = config
        self.locks[session_id] = threading.Lock()
        if key:
            self.by_key[key] = session_id
        return self.descriptor(session_id)

    # -- access ------------------------------------------------------------

    def get(self, session_id) -> Session:
        if session_id not in self.sessions:
            raise HTTPException(404, f"unknown session {session_id}")
        return self.sessions[session_id]

    def lock(self, session_id) -> threading.Lock:
        return self.locks[session_id]

    def descriptor(self, session_id) -> dict:
        s = self.get(session_id)
        return {
            "session_id": session_id,
            "target_plan": self.configs[session_id]["targets"],
            "rounds_per_target": s.rounds_per_target,
            "total_rounds": s.total_rounds,
            "status": "complete" if s.complete else "awaiting_response",
        }

    def query_audio(self, session_id):
        """(render bytes, dry-noise bytes) for the current round."""
        s = self.get(session_id)
        if s.complete:
            raise HTTPException(409, "session is complete")
        _, mp_row = s.select_query()
        seed = self.configs[session_id]["seed"]
        noise_seed = (seed * 1000003 + s.t) % (2 ** 31)
        stereo = render_binaural(mp_row, noise_seed, BURST_SECONDS, self.sample_rate)
        noise = np.random.default_rng(noise_seed).standard_normal(
            int(round(BURST_SECONDS * self.sample_rate)))
        peak = np.abs(noise).max()
        if peak > 0:
            noise = noise * (0.9 / peak)
        dry = np.stack([noise, noise], axis=1)
        return _wav_bytes(stereo, self.sample_rate), _wav_bytes(dry, self.sample_rate)


def _wav_bytes(stereo, sample_rate) -> bytes:
    pcm = np.clip(np.round(stereo * 32767.0), -32768, 32767).astype(np.int16)
    buf = io.BytesIO()
    wavfile.write(buf, int(sample_rate), pcm)
    return buf.getvalue()


def create_app(data_dir=None, codec=None, model=None,
               sample_rate: float = DEFAULT_SAMPLE_RATE,
               demo_seed: int = 0) -> FastAPI:
    if data_dir is None:
        data_dir = os.environ.get("HRTFGP_DATA_DIR", "./hrtfgp-data")
    store = SessionStore(data_dir, codec=codec, model=model,
                         sample_rate=sample_rate, demo_seed=demo_seed)
    app = FastAPI(title="hrtfgp session service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
        allow_headers=["*"])
    app.state.store = store

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict):
        return store.create(body)

    @app.get("/v1/sessions/{session_id}/query")
    def get_query(session_id: str):
        s = store.get(session_id)
        with store.lock(session_id):
            if s.complete:
                raise HTTPException(409, "session is complete")
            cand_id, _ = s.select_query()
            return {
                "round": s.t,
                "target_index": s.target_index,
                "round_in_block": s.round_in_block,
                "candidate_id": cand_id,
                "wav": f"/v1/sessions/{session_id}/query/render.wav",
                "alternates": f"/v1/sessions/{session_id}/query/noise.wav",
            }

    @app.get("/v1/sessions/{session_id}/query/render.wav")
    def get_render(session_id: str):
        with store.lock(session_id):
            render, _ = store.query_audio(session_id)
        return Response(render, media_type="audio/wav")

    @app.get("/v1/sessions/{session_id}/query/noise.wav")
    def get_noise(session_id: str):
        with store.lock(session_id):
            _, noise = store.query_audio(session_id)
        return Response(noise, media_type="audio/wav")

    @app.post("/v1/sessions/{session_id}/response")
    def post_response(session_id: str, body: dict):
        s = store.get(session_id)
        for field in ("azimuth", "elevation"):
            if field not in body or not isinstance(body[field], (int, float)):
                raise HTTPException(400, f"missing numeric field {field!r}")
        az, el = float(body["azimuth"]), float(body["elevation"])
        if not -np.pi < az <= np.pi:
            raise HTTPException(400, f"azimuth {az} outside (-pi, pi]")
        if not -np.pi / 2 <= el <= np.pi / 2:
            raise HTTPException(400, f"elevation {el} outside [-pi/2, pi/2]")
        with store.lock(session_id):
            if s.complete:
                raise HTTPException(409, "session is complete")
            if "round" in body and body["round"] != s.t:
                raise HTTPException(
                    409, f"round {body['round']} already answered (current {s.t})")
            record = s.apply_response(Direction.from_angles(az, el).as_array())
            return {
                "status": "complete" if s.complete else "next_round",
                "round": s.t,
                "eta": record["eta"],
            }

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        s = store.get(session_id)
        with store.lock(session_id):
            eta = [None if not np.isfinite(e) else float(e) for e in s.eta]
            return {
                **store.descriptor(session_id),
                "round": s.t,
                "eta": eta,
                "rounds": s.records,
                "best_per_target": s.best_per_target(),
            }

    return app
