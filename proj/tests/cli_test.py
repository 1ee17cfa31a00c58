#!/usr/bin/env python3
import json
import os
import subprocess
import sys
import tempfile
import time

BIN = sys.argv[1]
failures = []


def run(*args, **kw):
    return subprocess.run([BIN, *args], capture_output=True, text=True, **kw)


def records(proc):
    return [json.loads(line) for line in proc.stdout.splitlines() if line.strip()]


def check(name, cond, detail=""):
    print(("ok   " if cond else "FAIL ") + name + (f" ({detail})" if detail and not cond else ""))
    if not cond:
        failures.append(name)


p = run("--version")
check("version prints 0x01", p.returncode == 0 and "0x01" in p.stdout, p.stdout)

a = run("sim", "--nodes", "4", "--protocol", "shuffle", "--seed", "1")
b = run("sim", "--nodes", "4", "--protocol", "shuffle", "--seed", "1")
check("sim is deterministic", a.returncode == 0 and a.stdout == b.stdout and a.stdout.count("\n") == 1)
rec = records(a)[0]
check("honest shuffle completes", rec["outcome"] == "completed" and rec["delivered"] is True)
check("serial rounds N+5", rec["serial_rounds"] == 9, rec["serial_rounds"])
tot = rec["totals"]
check("report arithmetic", tot["sent"] == tot["received"] + tot["dropped"], tot)
check("oracle fields absent by default", "oracle" not in rec)

o = records(run("sim", "--nodes", "4", "--seed", "2", "--oracle"))[0]
perm = o["oracle"]["permutation"]
check("oracle permutation covers every slot", sorted(perm.values()) == [0, 1, 2, 3], perm)

p = run("sim", "--nodes", "4", "--fault", "duplicate_entry@2")
r = records(p)[0]
check("duplicate_entry@2 exposes member 2", r["verdict"]["exposed"] == [2], r["verdict"])
check("blamed exit code 3", p.returncode == 3, p.returncode)

p = run("sim", "--nodes", "4", "--fault", "duplicate_entry@2", "--rounds-budget", "2")
rs = records(p)
check("rerun delivers after exclusion", p.returncode == 0 and len(rs) == 2 and rs[-1]["delivered"] is True
      and 2 not in rs[-1]["roster"], [x["roster"] for x in rs])

p = run("sim", "--nodes", "4", "--fault", "go_silent@3", "--timeout-ms", "1000")
check("stalled exit code 4", p.returncode == 4 and records(p)[0]["failed"] == [3], p.returncode)

one = records(run("sim", "--protocol", "bulk", "--nodes", "8", "--msg-len", "65536,0,0,0,0,0,0,0"))[0]
eight = records(run("sim", "--protocol", "bulk", "--nodes", "8", "--msg-len", "8192"))[0]
def data_bytes(r):
    return [m["data_payload"] for m in r["members"]]
check("bulk data bytes balanced == unbalanced", data_bytes(one) == data_bytes(eight) == [65536 + 12 * 8] * 8,
      (data_bytes(one), data_bytes(eight)))

with tempfile.TemporaryDirectory() as d:
    f1 = os.path.join(d, "a.bin")
    with open(f1, "wb") as f:
        f.write(b"x" * 100)
    r = records(run("sim", "--protocol", "bulk", "--nodes", "3", "--msg-file", f1))[0]
    check("msg-file input", r["outcome"] == "completed" and len(r["recovered_slots"]) == 3)

for bad in (["sim", "--nodes", "x"], ["sim", "--fault", "nonsense@1"], ["sim", "--protocol", "smoke"],
            ["sim", "--nodes", "3", "--msg-len", "1,2"], ["frobnicate"],
            ["sim", "--nodes", "3", "--msg-len", "1,2,3"]):
    p = run(*bad)
    check("usage error exit 2: " + " ".join(bad), p.returncode == 2, p.returncode)

with tempfile.TemporaryDirectory() as d:
    base = 20000 + os.getpid() % 20000
    p = run("keygen", "--nodes", "3", "--dir", d, "--base-port", str(base), "--msg-len", "1024",
            "--timeout-ms", "3000")
    conf = os.path.join(d, "session.conf")
    check("keygen writes config", p.returncode == 0 and os.path.exists(conf))
    key = lambda i: os.path.join(d, f"member-{i}.key")
    p = run("node", "--config", conf, "--key", key(2), "--oracle")
    check("tcp refuses --oracle", p.returncode == 2, p.returncode)

    procs = [subprocess.Popen([BIN, "node", "--config", conf, "--key", key(i), "--seed", "3"],
                              stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True) for i in (2, 3)]
    time.sleep(0.1)
    lead = subprocess.run([BIN, "lead", "--config", conf, "--key", key(1), "--seed", "3"],
                          capture_output=True, text=True, timeout=60)
    outs = [lead.stdout] + [p.communicate(timeout=60)[0] for p in procs]
    check("tcp lead exit 0", lead.returncode == 0, lead.stderr)
    for i, out in enumerate(outs, start=1):
        rs = [json.loads(l) for l in out.splitlines() if l.strip()]
        check(f"tcp member {i} completed and delivered",
              len(rs) == 2 and rs[0]["outcome"] == "completed" and rs[0]["delivered"] is True, out[:200])

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
