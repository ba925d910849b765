"""End-to-end checks of the codeforge command-line tool.

Usage: cli_smoke.py <path-to-codeforge> <path-to-pipeline_corpus.jsonl>
"""

import json
import os
import signal
import socket
import subprocess
import sys
import tempfile
import unittest
import urllib.error
import urllib.request
from pathlib import Path

BINARY = None
CORPUS = None


def run(*args, check=True):
    env = dict(os.environ, CODEFORGE_TIMEOUT_SECS="2")
    proc = subprocess.run([BINARY, *map(str, args)], capture_output=True, text=True, env=env, timeout=300)
    if check and proc.returncode != 0:
        raise AssertionError(f"{args} exited {proc.returncode}: {proc.stderr}")
    return proc


def summary(proc):
    lines = proc.stdout.strip().splitlines()
    assert len(lines) == 1, proc.stdout
    return json.loads(lines[0])


def read_jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def block_body(text):
    return text if text == "" or text.endswith("\n") else text + "\n"


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class StagesTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls.tmp.name)
        d = cls.dir
        cls.ingest = summary(run("ingest", "--corpus", CORPUS, "--out", d / "ingested.jsonl"))
        cls.curate = summary(run("curate", "--in", d / "ingested.jsonl", "--out", d / "curated.jsonl"))
        cls.augment = summary(
            run("augment", "--in", d / "curated.jsonl", "--out", d / "samples.jsonl", "--errors", "syntax,logical")
        )
        cls.tasks = summary(
            run("tasks", "--in", d / "samples.jsonl", "--out", d / "tasks.jsonl",
                "--mix", "forward=0.5,backward=0.5", "--seed", "17")
        )

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_counts_shrink_along_the_pipeline(self):
        self.assertEqual(self.ingest["input_n"], 21)
        self.assertEqual(self.ingest["malformed"], 1)
        self.assertGreaterEqual(self.ingest["output_n"], self.curate["output_n"])
        self.assertGreaterEqual(self.curate["output_n"], self.augment["output_n"])
        self.assertEqual(self.augment["output_n"], self.tasks["output_n"])
        self.assertEqual(
            set(self.curate), {"input_n", "output_n", "iterations", "seed"}
        )
        self.assertEqual(self.curate["seed"], 17)
        self.assertEqual(self.curate["iterations"], 5)

    def test_tasks_are_reproducible(self):
        out = self.dir / "again.jsonl"
        run("tasks", "--in", self.dir / "samples.jsonl", "--out", out, "--seed", "17")
        self.assertEqual(out.read_bytes(), (self.dir / "tasks.jsonl").read_bytes())

    def test_score_with_ground_truth_answers(self):
        tasks = read_jsonl(self.dir / "tasks.jsonl")
        responses = []
        for t in tasks:
            if t["direction"] == "forward":
                gt = t["hidden"]["ground_truth"]
                text = (f"```answer_stdout\n{block_body(gt['gt_stdout'])}```\n"
                        f"```answer_stderr\n{block_body(gt['gt_stderr'])}```\n")
            else:
                text = "".join(
                    f"```answer_MASKED_LINE_{m['mask_id']}\n{m['original_line']}\n```\n"
                    for m in t["hidden"]["mask_map"]
                )
            responses.append({"task_id": t["task_id"], "response_text": text, "group_id": "g"})
        responses.append({"task_id": "missing:fwd", "response_text": ""})
        path = self.dir / "responses.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in responses))
        out = self.dir / "rewards.jsonl"
        s = summary(run("score", "--tasks", self.dir / "tasks.jsonl", "--responses", path, "--out", out))
        self.assertEqual(s["errors"], 1)
        self.assertEqual(s["scored"], len(tasks))
        rows = read_jsonl(out)
        self.assertEqual([r["task_id"] for r in rows], [r["task_id"] for r in responses])
        for row in rows[:-1]:
            self.assertEqual(row["r_format"], 1)
            self.assertEqual(row["group_id"], "g")
            self.assertGreaterEqual(row["r"], 0.1)
        self.assertEqual(rows[-1]["error"]["code"], "task_not_found")

    def test_bad_arguments_exit_with_status_2(self):
        d = self.dir
        self.assertEqual(run("tasks", "--in", d / "samples.jsonl", "--out", d / "x", "--mix", "sideways=1",
                             check=False).returncode, 2)
        self.assertEqual(run("curate", "--in", d / "nope.jsonl", "--out", d / "x", check=False).returncode, 2)
        self.assertEqual(run("curate", "--in", d / "ingested.jsonl", "--out", d / "x", "--gamma", "0",
                             check=False).returncode, 2)
        self.assertEqual(run("augment", "--in", d / "curated.jsonl", "--out", d / "x", "--errors", "unsupported",
                             check=False).returncode, 2)
        self.assertEqual(run(check=False).returncode, 2)

    def test_malformed_responses_fail(self):
        bad = self.dir / "bad.jsonl"
        bad.write_text('{"task_id": 3}\n')
        proc = run("score", "--tasks", self.dir / "tasks.jsonl", "--responses", bad, "--out", self.dir / "o",
                   check=False)
        self.assertEqual(proc.returncode, 1)
        self.assertIn("record 1", proc.stderr)


class RunAndServeTest(unittest.TestCase):
    def test_run_writes_all_artifacts(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / "pipeline.json"
            config.write_text(json.dumps({
                "corpus": str(CORPUS),
                "output_dir": "out",
                "seed": 17,
                "sandbox": {"timeout_secs": 2},
            }))
            s = summary(run("run", "--config", config))
            self.assertEqual([st["name"] for st in s["stages"]], ["ingest", "curate", "augment", "tasks"])
            out = Path(tmp) / "out"
            for name in ("ingested.jsonl", "curated.jsonl", "samples.jsonl", "tasks.jsonl", "manifest.json"):
                self.assertTrue((out / name).is_file(), name)
            config.write_text(json.dumps({"corpus": str(CORPUS), "unknown": 1}))
            self.assertEqual(run("run", "--config", config, check=False).returncode, 2)

    def test_serve_answers_and_stops_on_sigterm(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = Path(tmp) / "pipeline.json"
            config.write_text(json.dumps({"corpus": str(CORPUS), "output_dir": "out",
                                          "sandbox": {"timeout_secs": 2}}))
            run("run", "--config", config)
            tasks = read_jsonl(Path(tmp) / "out" / "tasks.jsonl")
            port = free_port()
            proc = subprocess.Popen([BINARY, "serve", "--tasks", str(Path(tmp) / "out" / "tasks.jsonl"),
                                     "--bind", f"127.0.0.1:{port}", "--slots", "2"],
                                    stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
            try:
                ready = json.loads(proc.stdout.readline())
                self.assertEqual(ready["listening"], f"127.0.0.1:{port}")
                base = f"http://127.0.0.1:{port}"
                with urllib.request.urlopen(base + "/health", timeout=10) as r:
                    self.assertEqual(r.headers["X-Codeforge-Schema"], "1")
                    self.assertEqual(json.load(r)["tasks"], len(tasks))
                task_id = tasks[0]["task_id"]
                with urllib.request.urlopen(f"{base}/tasks/{task_id}", timeout=10) as r:
                    view = json.load(r)
                    self.assertNotIn("hidden", view)
                    self.assertEqual(view["task_id"], task_id)
                with self.assertRaises(urllib.error.HTTPError) as err:
                    urllib.request.urlopen(base + "/tasks/absent", timeout=10)
                self.assertEqual(err.exception.code, 404)
                self.assertEqual(json.load(err.exception)["code"], "task_not_found")
                req = urllib.request.Request(base + "/score", method="POST",
                                             data=json.dumps({"task_id": task_id, "response_text": "?"}).encode(),
                                             headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req, timeout=30) as r:
                    self.assertEqual(json.load(r)["r"], 0.0)
            finally:
                proc.send_signal(signal.SIGTERM)
                out, _ = proc.communicate(timeout=30)
            self.assertEqual(proc.returncode, 0)
            self.assertEqual(json.loads(out.strip().splitlines()[-1])["scored"], 1)


if __name__ == "__main__":
    BINARY = sys.argv.pop(1)
    CORPUS = Path(sys.argv.pop(1))
    unittest.main(verbosity=2)
