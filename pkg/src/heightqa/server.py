"""HTTP face of the review stage: items, verdicts, progress and overlays.

The app is a plain FastAPI application so the test suite can drive it with
scripted clients; ``review-serve`` in the CLI puts it behind uvicorn. Static
files under ``static_dir`` (the browser UI, when built) are served from /ui.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import FileResponse, JSONResponse
from pydantic import BaseModel

from .errors import ReviewError
from .taskgen import QARecord
from .verify import ReviewStore, ReviewVerdict, agreement_report, render_overlay


class VerdictIn(BaseModel):
    record_id: str
    reviewer_id: str
    verdict: str
    note: str = ""


def create_app(store: ReviewStore, bundles: dict, records: dict[str, QARecord],
               static_dir: str | None = None) -> FastAPI:
    """bundles: tile_id -> TileBundle; records: record_id -> QARecord."""
    app = FastAPI(title="heightqa review service")
    overlay_cache: dict[str, bytes] = {}

    @app.get("/items/next")
    def items_next(reviewer: str = Query(...)):
        try:
            item = store.next_item(reviewer)
        except ReviewError as exc:
            raise HTTPException(status_code=403, detail=str(exc))
        if item is None:
            return {"item": None, "done": True}
        payload = item.to_json()
        payload["status"] = store.status(item.record_id)
        return {"item": payload, "done": False}

    @app.post("/verdicts")
    def post_verdict(body: VerdictIn):
        verdict = ReviewVerdict(record_id=body.record_id,
                                reviewer_id=body.reviewer_id,
                                verdict=body.verdict, note=body.note)
        try:
            outcome = store.submit(verdict)
        except ReviewError as exc:
            message = str(exc)
            if "unknown reviewer" in message:
                raise HTTPException(status_code=403, detail=message)
            if "unknown record" in message:
                raise HTTPException(status_code=404, detail=message)
            if "conflicting" in message:
                raise HTTPException(status_code=409, detail=message)
            raise HTTPException(status_code=422, detail=message)
        return {"outcome": outcome, "status": store.status(body.record_id)}

    @app.get("/progress")
    def progress():
        return store.progress()

    @app.get("/agreement")
    def agreement():
        return JSONResponse(agreement_report(store))

    @app.get("/overlays/{record_id}")
    def overlay(record_id: str):
        item = store.item(record_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown record {record_id}")
        if record_id not in overlay_cache:
            record = records.get(record_id)
            bundle = bundles.get(item.tile_id)
            if record is None or bundle is None:
                raise HTTPException(status_code=404,
                                    detail=f"tile {item.tile_id} unavailable")
            overlay_cache[record_id] = render_overlay(bundle, record)
        return Response(content=overlay_cache[record_id], media_type="image/png")

    if static_dir:
        root = Path(static_dir)

        @app.get("/ui")
        @app.get("/ui/{asset:path}")
        def ui(asset: str = "index.html"):
            target = (root / (asset or "index.html")).resolve()
            if root.resolve() not in target.parents and target != root.resolve():
                raise HTTPException(status_code=404, detail="not found")
            if not target.is_file():
                raise HTTPException(status_code=404, detail="not found")
            return FileResponse(target)

    return app
