"""FastAPI service exposing the query-time surface of the package.

A session (dataset + trained checkpoint, embedded once) is loaded at startup
or via POST /session; intent, retrieval, composition and embedding requests
are then read-only against that shared state, so any number of clients may
query concurrently. Training and the evaluation harness stay offline in the
CLI; this service covers the long-running retrieval use case.
"""

from __future__ import annotations

import base64
import binascii
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, dataio, model, numerics, retrieval, simulator
from ..errors import MVIntentError
from . import schemas


@dataclass
class Session:
    data_dir: str
    checkpoint_path: str
    pool_split: str
    dataset: dataio.MultiViewDataset
    checkpoint: model.Checkpoint
    index: retrieval.RetrievalIndex
    z_p: dict[str, np.ndarray]
    row_of_id: dict[str, int]


def load_session(data_dir: str, checkpoint_path: str, pool_split: str = "test") -> Session:
    dataset = dataio.load_dataset(data_dir)
    checkpoint = dataio.load_checkpoint(checkpoint_path)
    # Embed once; requests only slice these matrices afterwards.
    z_p, _ = simulator.embed_dataset(dataset, checkpoint)
    stats = simulator.output_stats(z_p)
    pool = dataset.split_indices(pool_split)
    index = retrieval.RetrievalIndex(
        item_ids=[dataset.item_ids[i] for i in pool],
        input_reps={v: dataset.features[v][pool] for v in dataset.view_names},
        output_reps={v: z_p[v][pool] for v in dataset.view_names},
        input_sim_kinds={v.name: v.sim_kind_input for v in dataset.views},
        stats=stats,
    )
    return Session(
        data_dir=str(data_dir),
        checkpoint_path=str(checkpoint_path),
        pool_split=pool_split,
        dataset=dataset,
        checkpoint=checkpoint,
        index=index,
        z_p=z_p,
        row_of_id={item: i for i, item in enumerate(dataset.item_ids)},
    )


def _session_info(session: Session) -> schemas.SessionInfo:
    return schemas.SessionInfo(
        data_dir=session.data_dir,
        checkpoint=session.checkpoint_path,
        pool_split=session.pool_split,
        views=session.dataset.view_names,
        n_items=session.dataset.n_items,
        pool_size=len(session.index.item_ids),
    )


def _ranked_items(ranked: retrieval.RankedList) -> list[schemas.RankedItem]:
    sims = ranked.per_view_sims or [{} for _ in ranked.ids]
    return [
        schemas.RankedItem(rank=i + 1, id=item, score=score, per_view_sim=sims[i])
        for i, (item, score) in enumerate(zip(ranked.ids, ranked.scores))
    ]


def create_app(session: Session | None = None) -> FastAPI:
    app = FastAPI(title="mvintent", version=__version__)
    app.state.session = session

    def _session() -> Session:
        if app.state.session is None:
            raise HTTPException(status_code=409, detail="no session loaded")
        return app.state.session

    def _collection(item_ids: list[str]) -> retrieval.Collection:
        session = _session()
        missing = [i for i in item_ids if i not in session.row_of_id]
        if missing:
            raise HTTPException(status_code=404, detail=f"unknown item ids: {missing[:5]}")
        rows = np.asarray([session.row_of_id[i] for i in item_ids])
        return retrieval.Collection(
            member_ids=list(item_ids),
            output_reps={n: session.z_p[n][rows] for n in session.dataset.view_names},
            input_reps={
                n: session.dataset.features[n][rows] for n in session.dataset.view_names
            },
        )

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok",
            session_loaded=app.state.session is not None,
            version=__version__,
        )

    @app.post("/session", response_model=schemas.SessionInfo)
    def post_session(request: schemas.LoadSessionRequest):
        try:
            app.state.session = load_session(
                request.data_dir, request.checkpoint, request.pool_split
            )
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except MVIntentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return _session_info(app.state.session)

    @app.get("/session", response_model=schemas.SessionInfo)
    def get_session():
        return _session_info(_session())

    @app.post("/intent", response_model=schemas.IntentResponse)
    def post_intent(request: schemas.IntentRequest):
        session = _session()
        coll = _collection(request.item_ids)
        try:
            weights = retrieval.collection_intent(coll, session.index.stats)
        except MVIntentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.IntentResponse(**weights.to_dict())

    @app.post("/retrieve", response_model=schemas.RetrieveResponse)
    def post_retrieve(request: schemas.RetrieveRequest):
        session = _session()
        coll = _collection(request.item_ids)
        try:
            ranked = retrieval.rank(session.index, coll, mode=request.mode, k=request.k)
        except MVIntentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.RetrieveResponse(mode=request.mode, results=_ranked_items(ranked))

    @app.post("/compose", response_model=schemas.ComposeResponse)
    def post_compose(request: schemas.ComposeRequest):
        session = _session()
        sources = [
            (_collection(src.item_ids), set(src.views)) for src in request.sources
        ]
        try:
            rep, weights = retrieval.compose(sources, session.index.view_names)
        except (MVIntentError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        exclude: set[str] = set()
        for src in request.sources:
            exclude.update(src.item_ids)
        ranked = retrieval.rank_composed(
            session.index, rep, weights.alpha, exclude_ids=exclude, k=request.k
        )
        return schemas.ComposeResponse(alpha=weights.alpha, results=_ranked_items(ranked))

    @app.post("/embed", response_model=schemas.EmbedResponse)
    def post_embed(request: schemas.EmbedRequest):
        session = _session()
        config = session.checkpoint.model_config
        features: dict[str, np.ndarray] = {}
        for view in config.view_names:
            if view not in request.features:
                raise HTTPException(status_code=422, detail=f"missing view {view!r}")
            matrix = np.asarray(request.features[view], dtype=np.float64)
            if request.normalize and matrix.size:
                matrix, _ = numerics.row_normalize(matrix)
            features[view] = matrix
        try:
            z_p, z_a = model.embed(config, session.checkpoint.params, features)
        except MVIntentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.EmbedResponse(
            z_specific={v: m.tolist() for v, m in z_p.items()},
            z_aligned={v: m.tolist() for v, m in z_a.items()},
        )

    @app.post("/featurize/color", response_model=schemas.FeaturizeColorResponse)
    def post_featurize_color(request: schemas.FeaturizeColorRequest):
        if request.ppm_path is not None:
            try:
                pixels, width, height = dataio.read_ppm(request.ppm_path)
            except FileNotFoundError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from exc
            except MVIntentError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        else:
            if request.pixels_b64 is None or request.width is None or request.height is None:
                raise HTTPException(
                    status_code=422,
                    detail="provide ppm_path or (pixels_b64, width, height)",
                )
            try:
                pixels = base64.b64decode(request.pixels_b64, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise HTTPException(status_code=422, detail="invalid base64") from exc
            width, height = request.width, request.height
        try:
            hist = dataio.lab_histogram(pixels, width, height, joint=request.joint)
        except MVIntentError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return schemas.FeaturizeColorResponse(dim=hist.size, vector=hist.tolist())

    return app


def default_app() -> FastAPI:
    """App factory for `uvicorn mvintent.service.app:default_app`."""
    return create_app()
