#!/usr/bin/env python3
"""
Launch a local multi-node Redynis cluster, one `main.py serve` process per node.
The first node is the master propagator and runs the placement daemon.
"""

import argparse
import subprocess
import sys
import time
from pathlib import Path


def launch_node(node_id, port, peers, args, run_daemon):
    """Launch a single node process"""
    print(f"Starting {node_id} on port {port}...")
    command = [
        sys.executable, "main.py", "serve",
        "--node-id", node_id,
        "--port", str(port),
        "--peers", peers,
        "--remote-latency-ms", str(args.remote_latency_ms),
    ]
    if args.inject_latency:
        command.append("--inject-latency")
    if run_daemon:
        command += ["--run-daemon", "--daemon-interval-ms", str(args.daemon_interval_ms)]

    try:
        process = subprocess.Popen(command, cwd=Path(__file__).parent)
        print(f"✓ {node_id} started (PID: {process.pid})")
        return process
    except Exception as e:
        print(f"✗ Failed to start {node_id}: {e}")
        return None


def main():
    parser = argparse.ArgumentParser(description="Launch a local Redynis cluster")
    parser.add_argument("--nodes", type=int, default=3)
    parser.add_argument("--base-port", type=int, default=8001)
    parser.add_argument("--remote-latency-ms", type=int, default=100)
    parser.add_argument("--daemon-interval-ms", type=int, default=1000)
    parser.add_argument("--inject-latency", action="store_true")
    args = parser.parse_args()

    nodes = [(f"node-{index}", args.base_port + index - 1) for index in range(1, args.nodes + 1)]
    peers = ",".join(f"{node_id}=http://127.0.0.1:{port}" for node_id, port in nodes)

    print("🚀 Launching Redynis cluster...")
    print("=" * 50)

    processes = []
    for position, (node_id, port) in enumerate(nodes):
        process = launch_node(node_id, port, peers, args, run_daemon=position == 0)
        if process:
            processes.append((process, node_id))
        time.sleep(1)

    print("\n" + "=" * 50)
    print(f"✓ Started {len(processes)} nodes (serializer: {nodes[0][0]})")
    print("\nNode URLs:")
    for node_id, port in nodes:
        print(f"  {node_id}: http://127.0.0.1:{port}")

    print("\nTo stop the cluster, press Ctrl+C")

    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        print("\n\n🛑 Stopping all nodes...")
        for process, node_id in processes:
            try:
                process.terminate()
                print(f"✓ Stopped {node_id}")
            except OSError:
                pass
        print("All nodes stopped.")


if __name__ == "__main__":
    main()
