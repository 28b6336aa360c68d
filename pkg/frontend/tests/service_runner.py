"""Starts the authoring service for the front-end round-trip test.

Prints "PORT <n>" once the server is listening, then serves until killed.
"""
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[2]
sys.path.insert(0, str(ROOT / "src"))

from ontoparse.ontology import load_ontology            # noqa: E402
from ontoparse.service import start_background          # noqa: E402

onto = load_ontology(ROOT / "src" / "ontoparse" / "data" / "restaurant.json")
log = Path(tempfile.mkdtemp()) / "commits.jsonl"
server = start_background([onto], port=0, log_path=log)
print(f"PORT {server.server_address[1]}", flush=True)

import threading
threading.Event().wait()
