import logging
from typing import Dict, List, Optional

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from starlette.concurrency import run_in_threadpool

from ..client.peer_client import HttpTransport, PeerClient, RemoteMetadataStore
from ..core.errors import (
    CapacityExceededError,
    InvalidHostsError,
    MetadataExistsError,
    MetadataFormatError,
    RedynisError,
    UnknownKeyError,
)
from ..core.model import ClusterTopology, KeyMetadata, NodeId, OwnershipPolicy
from ..daemon.placement import DataLayer, PlacementDaemon, run_daemon
from ..service.node_service import NodeService
from ..sim.clock import WallClock
from ..store.access_recorder import BackgroundAccessRecorder
from ..store.kv_backend import InMemoryBackend
from ..store.metadata_store import AccessEvent, InMemoryMetadataStore

logger = logging.getLogger(__name__)

OCTET_STREAM = "application/octet-stream"


class CreateMetadataRequest(BaseModel):
    initial_host: str = Field(alias="initialHost", min_length=1)
    at_millis: int = Field(alias="atMillis", ge=0)


class AccessRequest(BaseModel):
    accessor: str = Field(min_length=1)
    at_millis: int = Field(alias="atMillis", ge=0)


class HostsRequest(BaseModel):
    hosts: List[str]


def create_app(service: NodeService, daemon: Optional[PlacementDaemon] = None) -> FastAPI:
    """HTTP interface of one node"""
    app = FastAPI(title=f"Redynis node {service.node_id}", version="1.0.0")
    app.state.service = service
    app.state.daemon = daemon

    @app.get("/health")
    def health():
        return {"node": service.node_id, "role": service.role}

    @app.get("/kv/{key:path}")
    def get_value(key: str):
        try:
            result = service.fetch(key)
        except RedynisError as e:
            raise HTTPException(status_code=502, detail=str(e))
        if result.failed:
            raise HTTPException(status_code=502, detail=result.error)
        if not result.found:
            raise HTTPException(status_code=404, detail=f"{key} not found")
        return Response(
            content=result.value,
            media_type=OCTET_STREAM,
            headers={"X-Served-By": result.served_by, "X-Remote": "true" if result.remote else "false"},
        )

    @app.put("/kv/{key:path}")
    async def put_value(key: str, request: Request):
        value = await request.body()
        result = await run_in_threadpool(service.store, key, value)
        return JSONResponse(status_code=200 if result.success else 502, content=result.to_dict())

    @app.get("/meta/{key:path}")
    def get_metadata(key: str):
        meta = service.metadata.get(key)
        if meta is None:
            raise HTTPException(status_code=404, detail=f"no metadata for {key}")
        return meta.to_dict()

    @app.put("/meta/{key:path}")
    async def put_metadata(key: str, request: Request):
        try:
            meta = KeyMetadata.from_json(await request.body())
        except MetadataFormatError as e:
            raise HTTPException(status_code=422, detail=str(e))
        await run_in_threadpool(service.metadata.put, key, meta)
        return meta.to_dict()

    # peer protocol: data layer, write relay, and the metadata layer
    @app.get("/internal/kv/{key:path}")
    def internal_get(key: str):
        value = service.backend.get(key)
        if value is None:
            raise HTTPException(status_code=404, detail=f"{key} not stored on {service.node_id}")
        return Response(content=value, media_type=OCTET_STREAM)

    @app.put("/internal/kv/{key:path}")
    async def internal_put(key: str, request: Request):
        value = await request.body()
        try:
            service.backend.put(key, value)
        except CapacityExceededError as e:
            raise HTTPException(status_code=413, detail=str(e))
        return {"stored": True}

    @app.delete("/internal/kv/{key:path}")
    def internal_delete(key: str):
        return {"existed": service.backend.delete(key)}

    @app.post("/internal/relay/{key:path}")
    async def relay(key: str, request: Request, origin: str = Query(...)):
        value = await request.body()
        result = await run_in_threadpool(service.serialize_store, key, value, origin)
        return {**result.to_dict(), "latencyMillis": result.latency_millis}

    @app.get("/internal/meta")
    def scan_metadata(key: Optional[List[str]] = Query(default=None)):
        snapshot = service.metadata.scan(key)
        return {"entries": [{"key": k, "metadata": meta.to_dict()} for k, meta in snapshot]}

    @app.post("/internal/meta/{key:path}/create", status_code=201)
    def create_metadata(key: str, body: CreateMetadataRequest):
        try:
            service.metadata.create(key, body.initial_host, body.at_millis)
        except MetadataExistsError as e:
            raise HTTPException(status_code=409, detail=str(e))
        return {"created": True}

    @app.post("/internal/meta/{key:path}/access")
    def record_access(key: str, body: AccessRequest):
        recorded = service.metadata.record_access(AccessEvent(key=key, accessor=body.accessor, at_millis=body.at_millis))
        return {"recorded": recorded}

    @app.put("/internal/meta/{key:path}/hosts")
    def set_hosts(key: str, body: HostsRequest):
        try:
            service.metadata.set_hosts(key, body.hosts)
        except InvalidHostsError as e:
            raise HTTPException(status_code=400, detail=str(e))
        except UnknownKeyError as e:
            raise HTTPException(status_code=404, detail=str(e))
        return {"hosts": sorted(body.hosts)}

    @app.delete("/internal/meta/{key:path}")
    def delete_metadata(key: str):
        service.metadata.delete(key)
        return {"deleted": True}

    @app.post("/internal/daemon/pass")
    def daemon_pass():
        if daemon is None:
            raise HTTPException(status_code=404, detail=f"{service.node_id} does not run the placement daemon")
        result = daemon.run_pass()
        return {**result.plan.to_dict(), "report": result.report.to_dict()}

    return app


def build_http_node(
    node_id: NodeId,
    peers: Dict[NodeId, str],
    serializer: NodeId,
    policy: OwnershipPolicy,
    remote_latency_millis: int = 100,
    inject_latency: bool = False,
    max_value_bytes: Optional[int] = None,
    with_daemon: bool = False,
) -> FastAPI:
    """Wire one node for a split deployment; the serializer hosts the metadata layer"""
    topology = ClusterTopology.uniform(list(peers), serializer, remote_latency_millis)
    client = PeerClient(peers)
    clock = WallClock()
    if node_id == serializer:
        metadata = InMemoryMetadataStore()
    else:
        metadata = RemoteMetadataStore(client, serializer)
    recorder = BackgroundAccessRecorder(metadata)
    backend = InMemoryBackend(max_value_bytes=max_value_bytes)
    transport = HttpTransport(client, topology, inject_latency=inject_latency)
    service = NodeService(
        node_id=node_id,
        topology=topology,
        backend=backend,
        metadata=metadata,
        recorder=recorder,
        transport=transport,
        clock=clock,
    )

    daemon = None
    if with_daemon:
        data = DataLayer(node_id, backend, transport, topology)
        daemon = run_daemon(metadata, data, policy, clock, topology.size, recorder=recorder)

    app = create_app(service, daemon)

    @app.on_event("shutdown")
    def shutdown():
        if daemon is not None:
            daemon.stop()
        recorder.close()
        transport.close()

    logger.info(f"Node {node_id} ready as {service.role}, {len(peers)} peers, daemon {'on' if daemon else 'off'}")
    return app
