#!/usr/bin/env python3
"""
Web interface for ALOQ experiments
Starts experiments in the background and serves their status and quartile summaries
"""

import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import aiofiles
from fastapi import BackgroundTasks, FastAPI, HTTPException
from pydantic import BaseModel
import uvicorn

from aloq_schema import ExperimentSpec
from config import Config
from harness import aggregate, run_experiment_async

# Initialize FastAPI app
app = FastAPI(
    title="ALOQ Experiment API",
    description="Seeded policy-search experiments under significant rare events",
    version="1.0.0"
)


class ExperimentResponse(BaseModel):
    experiment_id: str
    status: str
    task: str
    created_at: str
    completed_at: Optional[str] = None
    run_files: Optional[list] = None
    error: Optional[str] = None


# In-memory experiment records; result files on disk are the source of truth
experiment_storage: Dict[str, ExperimentResponse] = {}
experiment_specs: Dict[str, ExperimentSpec] = {}


@app.post("/api/experiments")
async def start_experiment(spec: ExperimentSpec, background_tasks: BackgroundTasks):
    """Start a new experiment"""

    experiment_id = f"experiment_{datetime.now().strftime('%Y%m%d_%H%M%S_%f')}"

    experiment_storage[experiment_id] = ExperimentResponse(
        experiment_id=experiment_id,
        status="processing",
        task=spec.task,
        created_at=datetime.now().isoformat()
    )
    experiment_specs[experiment_id] = spec

    background_tasks.add_task(run_experiment_job, experiment_id, spec)

    return {"experiment_id": experiment_id, "status": "processing"}


@app.get("/api/experiments/{experiment_id}")
async def get_experiment_status(experiment_id: str):
    """Get experiment status"""

    if experiment_id not in experiment_storage:
        raise HTTPException(status_code=404, detail="Experiment not found")

    return experiment_storage[experiment_id]


@app.get("/api/experiments/{experiment_id}/summary")
async def get_experiment_summary(experiment_id: str) -> Dict[str, Any]:
    """Quartile summary of a finished experiment"""

    if experiment_id not in experiment_storage:
        raise HTTPException(status_code=404, detail="Experiment not found")

    experiment = experiment_storage[experiment_id]

    if experiment.status != "completed":
        raise HTTPException(status_code=400, detail="Experiment not completed")

    spec = experiment_specs[experiment_id]
    summary = aggregate(Path(spec.output_dir) / experiment.task)

    summary_file = Path(spec.output_dir) / f"{experiment_id}_summary.json"
    async with aiofiles.open(summary_file, 'w') as f:
        await f.write(json.dumps(summary, indent=2))

    return summary


async def run_experiment_job(experiment_id: str, spec: ExperimentSpec):
    """Background task to run the experiment"""

    try:
        paths = await run_experiment_async(spec)

        record = experiment_storage[experiment_id]
        record.status = "completed"
        record.completed_at = datetime.now().isoformat()
        record.task = paths[0].parent.name if paths else spec.task
        record.run_files = [str(p) for p in paths]

    except Exception as e:
        record = experiment_storage[experiment_id]
        record.status = "failed"
        record.error = str(e)
        record.completed_at = datetime.now().isoformat()


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    try:
        Config.validate()
        return {"status": "healthy", "timestamp": datetime.now().isoformat()}
    except Exception as e:
        raise HTTPException(
            status_code=500, detail=f"Health check failed: {str(e)}")


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="ALOQ Experiment API")
    parser.add_argument("--host", default=Config.API_HOST, help="Host to bind to")
    parser.add_argument("--port", type=int, default=Config.API_PORT, help="Port to bind to")
    args = parser.parse_args()

    print(f"🚀 Starting ALOQ Experiment API on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port)
