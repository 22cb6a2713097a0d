#!/usr/bin/env python3
"""End-to-end checks of the lift3d command-line tool.

Usage: test_cli.py <lift3d binary> <schema directory>
"""

import filecmp
import json
import os
import subprocess
import sys
import tempfile
import unittest
from pathlib import Path

import jsonschema
import numpy as np
from PIL import Image

BINARY = None
SCHEMAS = None


def schema(name):
    with open(SCHEMAS / f"{name}.schema.json") as f:
        return json.load(f)


def validate(instance, name):
    jsonschema.Draft202012Validator(schema(name)).validate(instance)


def run(*args, env=None, check=None):
    full_env = dict(os.environ)
    full_env.pop("LIFT3D_SEED", None)
    if env:
        full_env.update(env)
    proc = subprocess.run([str(BINARY), *map(str, args)], capture_output=True, text=True,
                          env=full_env, timeout=300)
    if check is not None and proc.returncode != check:
        raise AssertionError(f"exit {proc.returncode} != {check} for {args}\n"
                             f"stdout:\n{proc.stdout}\nstderr:\n{proc.stderr}")
    return proc


def json_lines(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def write_box_obj(path, half=(0.5, 0.5, 0.5)):
    hx, hy, hz = half
    verts = [((hx if i & 1 else -hx), (hy if i & 2 else -hy), (hz if i & 4 else -hz))
             for i in range(8)]
    faces = [(0, 2, 1), (1, 2, 3), (4, 5, 6), (5, 7, 6), (0, 1, 4), (1, 5, 4),
             (2, 6, 3), (3, 6, 7), (0, 4, 2), (2, 4, 6), (1, 3, 5), (3, 7, 5)]
    with open(path, "w") as f:
        for v in verts:
            f.write("v %.9g %.9g %.9g\n" % v)
        for a, b, c in faces:
            f.write(f"f {a + 1} {b + 1} {c + 1}\n")
    return np.array(verts), faces


def write_json(path, value):
    with open(path, "w") as f:
        json.dump(value, f)


def write_pointmap(path, points):
    h, w, _ = points.shape
    with open(path, "wb") as f:
        f.write(f"{w} {h} 3\n".encode())
        f.write(points.astype("<f4").tobytes())


def centered_camera(w, h, focal):
    return {"fx": focal, "fy": focal, "cx": w / 2, "cy": h / 2, "width": w, "height": h}


def pixel_points(w, h, focal, depth):
    """Back-projects every pixel center at the given per-pixel depth."""
    u = np.arange(w) + 0.5
    v = np.arange(h) + 0.5
    uu, vv = np.meshgrid(u, v)
    x = (uu - w / 2) / focal * depth
    y = (vv - h / 2) / focal * depth
    return np.stack([x, y, depth], axis=-1)


def identity_pose(translation, scale=1.0):
    return {"rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "translation": list(translation),
            "scale": scale}


def dir_files(path):
    return sorted(p.name for p in Path(path).iterdir())


def assert_same_dirs(test, a, b):
    test.assertEqual(dir_files(a), dir_files(b))
    for name in dir_files(a):
        test.assertTrue(filecmp.cmp(Path(a) / name, Path(b) / name, shallow=False), name)


class CliTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory(prefix="lift3d_cli_")
        cls.root = Path(cls.tmp.name)
        cls.cube = cls.root / "cube.obj"
        cls.slab = cls.root / "slab.obj"
        cls.box = cls.root / "box.obj"
        write_box_obj(cls.cube)
        write_box_obj(cls.slab, (0.5, 0.5, 0.3))
        write_box_obj(cls.box, (0.4, 0.25, 0.15))

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def path(self, name):
        return self.root / name

    # -- usage and exit codes ------------------------------------------------

    def test_unknown_subcommand_is_usage_error(self):
        proc = run("frobnicate")
        self.assertEqual(proc.returncode, 64)
        self.assertIn("eval-shape", proc.stdout + proc.stderr)

    def test_missing_subcommand_is_usage_error(self):
        self.assertEqual(run().returncode, 64)

    def test_bad_option_value_is_usage_error(self):
        self.assertEqual(run("--threads", "0", "fm-check").returncode, 64)
        self.assertEqual(run("engine-sim", "--curriculum", "0.5,0.3").returncode, 64)
        self.assertEqual(run("engine-sim", "--curriculum", "0.3,abc").returncode, 64)

    def test_invalid_seed_environment_is_usage_error(self):
        self.assertEqual(run("fm-check", env={"LIFT3D_SEED": "nope"}).returncode, 64)

    def test_missing_input_is_data_error(self):
        self.assertEqual(run("eval-shape", self.path("absent.jsonl")).returncode, 2)
        self.assertEqual(run("icp", self.path("absent.ply"), self.cube).returncode, 2)

    def test_help_exits_zero(self):
        self.assertEqual(run("--help").returncode, 0)
        self.assertEqual(run("--version").returncode, 0)

    # -- fm-check ------------------------------------------------------------

    def test_fm_check_all_pass(self):
        proc = run("fm-check", check=0)
        lines = json_lines(proc.stdout)
        rows, summary = lines[:-1], lines[-1]
        self.assertGreaterEqual(len(rows), 7)
        for row in rows:
            validate(row, "fm_check_row")
            self.assertEqual(row["status"], "PASS", row)
        validate(summary, "fm_check_summary")
        self.assertTrue(summary["all_pass"])
        table = run("fm-check", "--table", check=0).stdout
        self.assertEqual(table.count("PASS"), len(rows))

    # -- eval-shape / eval-layout -------------------------------------------

    def shape_manifest(self, name, entries):
        path = self.path(name)
        with open(path, "w") as f:
            for e in entries:
                f.write(json.dumps(e) + "\n")
        return path

    def test_eval_shape_empty_manifest(self):
        manifest = self.shape_manifest("empty.jsonl", [])
        lines = json_lines(run("eval-shape", manifest, check=0).stdout)
        self.assertEqual(len(lines), 1)
        validate(lines[0], "eval_summary")
        self.assertEqual(lines[0]["aggregate"]["n"], 0)

    def test_eval_shape_identity_and_aggregate(self):
        manifest = self.shape_manifest("shape.jsonl", [
            {"id": "same", "pred_mesh": "cube.obj", "gt_mesh": "cube.obj"},
            {"id": "slab", "pred_mesh": "slab.obj", "gt_mesh": "cube.obj"},
        ])
        out = self.path("shape_out")
        proc = run("--out", out, "eval-shape", manifest, "--points", 20000, check=0)
        lines = json_lines(proc.stdout)
        self.assertEqual(len(lines), 3)
        for line in lines[:-1]:
            validate(line, "eval_shape_report")
        summary = lines[-1]
        validate(summary, "eval_summary")
        same, slab = lines[0]["shape"], lines[1]["shape"]
        self.assertEqual(same["f1"], 1.0)
        self.assertLess(slab["f1"], 1.0)
        agg = summary["aggregate"]["shape"]
        for key in ("f1", "precision", "recall", "viou", "chamfer", "emd"):
            self.assertAlmostEqual(agg[key], (same[key] + slab[key]) / 2, places=12)
        self.assertEqual((out / "reports.jsonl").read_text(), proc.stdout)

        # Thread count and reruns do not change a single byte.
        again = run("--threads", 3, "eval-shape", manifest, "--points", 20000, check=0)
        self.assertEqual(again.stdout, proc.stdout)

    def test_eval_shape_gt_equals_pred_gives_unit_f1(self):
        manifest = self.shape_manifest("unit.jsonl", [
            {"id": "box", "pred_mesh": "box.obj", "gt_mesh": "box.obj"}])
        summary = json_lines(run("eval-shape", manifest, "--points", 20000, check=0).stdout)[-1]
        self.assertEqual(summary["aggregate"]["shape"]["f1"], 1.0)

    def test_eval_shape_bad_entry_reports_error(self):
        manifest = self.shape_manifest("bad.jsonl", [
            {"id": "ok", "pred_mesh": "cube.obj", "gt_mesh": "cube.obj"},
            {"id": "missing", "pred_mesh": "nowhere.obj", "gt_mesh": "cube.obj"},
        ])
        with open(manifest, "a") as f:
            f.write("{not json\n")
        proc = run("eval-shape", manifest, "--points", 5000)
        self.assertEqual(proc.returncode, 2)
        lines = json_lines(proc.stdout)
        validate(lines[1], "eval_shape_report")
        self.assertIn("error", lines[1])
        self.assertIn("error", lines[2])
        self.assertEqual(lines[-1]["aggregate"]["n"], 1)
        self.assertEqual(lines[-1]["aggregate"]["n_errors"], 2)

    def test_eval_shape_config_override(self):
        manifest = self.shape_manifest("cfg.jsonl", [
            {"id": "same", "pred_mesh": "cube.obj", "gt_mesh": "cube.obj"}])
        config = self.path("cfg.json")
        write_json(config, {"eval_shape": {"n_points": 4000, "fscore_threshold": 0.02}})
        line = json_lines(run("--config", config, "eval-shape", manifest, check=0).stdout)[0]
        self.assertEqual(line["config"]["n_points"], 4000)
        self.assertEqual(line["config"]["fscore_threshold"], 0.02)

    def test_eval_layout_add_s_fraction(self):
        write_json(self.path("pose_a.json"), identity_pose([0, 0, 3]))
        entries = [
            {"id": "exact", "pred_mesh": "box.obj", "gt_mesh": "box.obj",
             "pred_pose": "pose_a.json", "gt_pose": "pose_a.json"},
            {"id": "far", "pred_mesh": "box.obj", "gt_mesh": "box.obj",
             "pred_pose": identity_pose([0.6, 0, 3]), "gt_pose": "pose_a.json"},
            {"id": "near", "pred_mesh": "box.obj", "gt_mesh": "box.obj",
             "pred_pose": identity_pose([0.01, 0, 3]), "gt_pose": identity_pose([0, 0, 3])},
        ]
        manifest = self.shape_manifest("layout.jsonl", entries)
        proc = run("eval-layout", manifest, "--points", 4000, check=0)
        lines = json_lines(proc.stdout)
        for line in lines[:-1]:
            validate(line, "eval_layout_report")
        validate(lines[-1], "eval_summary")
        passes = [line["layout"]["add_s_at_01"] for line in lines[:-1]]
        self.assertEqual(passes, [True, False, True])
        self.assertAlmostEqual(lines[-1]["aggregate"]["layout"]["add_s_at_01"], 2 / 3, places=12)
        self.assertEqual(lines[0]["layout"]["iou3d"], 1.0)
        threaded = run("--threads", 2, "eval-layout", manifest, "--points", 4000, check=0)
        self.assertEqual(threaded.stdout, proc.stdout)

    # -- icp -----------------------------------------------------------------

    def test_icp_identity_and_known_motion(self):
        result = json_lines(run("icp", self.box, self.box, check=0).stdout)[0]
        validate(result, "icp")
        self.assertLess(result["rotation_deg"], 1e-9)
        self.assertLess(max(abs(t) for t in result["translation"]), 1e-12)

        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(400, 3)) * [0.8, 0.5, 0.3]
        angle = np.radians(12.0)
        rot = np.array([[np.cos(angle), -np.sin(angle), 0], [np.sin(angle), np.cos(angle), 0],
                        [0, 0, 1]])
        moved = pts @ rot.T + [0.1, -0.05, 0.2]
        np.savetxt(self.path("src.xyz"), pts)
        np.savetxt(self.path("dst.xyz"), moved)
        result = json_lines(run("icp", self.path("src.xyz"), self.path("dst.xyz"), check=0).stdout)[0]
        validate(result, "icp")
        self.assertAlmostEqual(result["rotation_deg"], 12.0, places=6)
        np.testing.assert_allclose(result["rotation"], rot, atol=1e-8)

    # -- renderpaste ---------------------------------------------------------

    def background(self, name, w, h):
        path = self.path(name)
        rng = np.random.default_rng(11)
        Image.fromarray(rng.integers(0, 255, size=(h, w, 3), dtype=np.uint8)).save(path)
        return path

    def fo_args(self, out, *extra):
        bg = self.background("bg96.png", 96, 96)
        return ["--seed", 5, "--out", out, "renderpaste", "fo", "--background", bg,
                "--mesh", self.cube, "--mesh", self.box, "--mesh", self.slab,
                "--count", 12, *extra]

    def test_fo_seeded_runs_are_byte_identical(self):
        a, b, c = self.path("fo_a"), self.path("fo_b"), self.path("fo_c")
        summary = json_lines(run(*self.fo_args(a), check=0).stdout)[0]
        validate(summary, "renderpaste_summary")
        self.assertGreater(summary["accepted"], 0)
        self.assertEqual(summary["accepted"] + summary["rejected"], 12)
        run(*self.fo_args(b), check=0)
        run("--threads", 3, *self.fo_args(c), check=0)
        assert_same_dirs(self, a, b)
        assert_same_dirs(self, a, c)

        for rec in json_lines((a / "manifest.jsonl").read_text()):
            validate(rec, "renderpaste_manifest_entry")
            visible = np.array(Image.open(a / rec["visible_mask"])) > 0
            obj = np.array(Image.open(a / rec["object_mask"])) > 0
            self.assertFalse((visible & ~obj).any())
            self.assertEqual(int(visible.sum()), rec["visible_pixels"])
            if rec["target_is_occluder"]:
                # The pasted target is drawn on top; the filter ran on the
                # object underneath.
                self.assertEqual(rec["visible_ratio"], 1.0)
            else:
                self.assertGreaterEqual(rec["visible_ratio"], 0.1)
                self.assertLessEqual(rec["visible_ratio"], 0.9)
                self.assertGreaterEqual(rec["visible_pixels"], 0.002 * 96 * 96)
        for rec in json_lines((a / "rejections.jsonl").read_text()):
            validate(rec, "renderpaste_rejection")

    def test_fo_forced_rejection(self):
        out = self.path("fo_reject")
        summary = json_lines(run(*self.fo_args(out, "--min-area", 1.0, "--max-attempts", 3),
                                 check=0).stdout)[0]
        validate(summary, "renderpaste_summary")
        self.assertEqual(summary["accepted"], 0)
        self.assertEqual(summary["rejected"], 12)
        self.assertEqual((out / "manifest.jsonl").read_text(), "")
        rejections = json_lines((out / "rejections.jsonl").read_text())
        self.assertEqual(len(rejections), 12)
        for rec in rejections:
            validate(rec, "renderpaste_rejection")
        self.assertEqual(sorted(dir_files(out)),
                         ["manifest.jsonl", "rejections.jsonl", "summary.json"])

    def os_scene(self):
        # 40 x 40 view: a wall at depth 8, the removed object at depth 5 and a
        # floor strip at depth 4 touching the object's bottom edge.
        w = h = 40
        depth = np.full((h, w), 8.0)
        depth[10:30, 10:30] = 5.0
        depth[30:, :] = 4.0
        write_pointmap(self.path("scene.bin"), pixel_points(w, h, 40.0, depth))
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[10:30, 10:30] = 255
        Image.fromarray(mask).save(self.path("object.png"))
        return self.background("bg40.png", w, h)

    def test_osr_visibility_floor(self):
        bg = self.os_scene()
        out = self.path("osr")
        args = ["--seed", 2, "--out", out, "renderpaste", "osr", "--background", bg,
                "--mesh", self.box, "--mesh", self.cube, "--pointmap", self.path("scene.bin"),
                "--mask", self.path("object.png"), "--count", 10]
        summary = json_lines(run(*args, check=0).stdout)[0]
        validate(summary, "renderpaste_summary")
        self.assertGreater(summary["accepted"], 0)
        for rec in json_lines((out / "manifest.jsonl").read_text()):
            validate(rec, "renderpaste_manifest_entry")
            self.assertGreaterEqual(rec["visible_ratio"], 0.2)
            self.assertTrue(rec["cue"]["physical_support"])
            self.assertTrue((out / rec["pointmap"]).exists())
        again = self.path("osr_again")
        run(*[again if a == out else a for a in args], check=0)
        assert_same_dirs(self, out, again)

    def test_osa_uses_annotated_pose(self):
        bg = self.os_scene()
        write_json(self.path("osa_pose.json"), identity_pose([0, 0, 5], 0.5))
        out = self.path("osa")
        summary = json_lines(run("--out", out, "renderpaste", "osa", "--background", bg,
                                 "--mesh", self.cube, "--pointmap", self.path("scene.bin"),
                                 "--mask", self.path("object.png"), "--pose",
                                 self.path("osa_pose.json"), "--count", 2, check=0).stdout)[0]
        validate(summary, "renderpaste_summary")
        for rec in json_lines((out / "manifest.jsonl").read_text()):
            validate(rec, "renderpaste_manifest_entry")
            self.assertEqual(rec["pose"]["translation"], [0, 0, 5])

    def test_renderpaste_usage_errors(self):
        bg = self.background("bg8.png", 8, 8)
        self.assertEqual(run("renderpaste", "fo", "--background", bg, "--mesh", self.cube)
                         .returncode, 64)
        self.assertEqual(run("--out", self.path("x"), "renderpaste", "osr", "--background", bg,
                             "--mesh", self.cube).returncode, 64)

    # -- engine-sim ----------------------------------------------------------

    def test_engine_sim(self):
        csv = self.path("elo.csv")
        args = ["--seed", 4, "engine-sim", "-K", 3, "-N", 4, "--curriculum", "0.3,0.45,0.5",
                "--inputs", 60, "--elo-games", 50, "--elo-csv", csv]
        proc = run(*args, check=0)
        lines = json_lines(proc.stdout)
        self.assertEqual(len(lines), 4)
        for line in lines[:-1]:
            validate(line, "engine_iteration")
        validate(lines[-1], "engine_summary")
        self.assertEqual([line["alpha"] for line in lines[:-1]], [0.3, 0.45, 0.5])
        rows = csv.read_text().splitlines()
        self.assertEqual(rows[0], "iteration,model,rating")
        self.assertEqual(len(rows) - 1, 2 + 3 + 4)
        self.assertEqual(run(*args, check=0).stdout, proc.stdout)
        env_run = run(*args[2:], env={"LIFT3D_SEED": "4"}, check=0)
        self.assertEqual(env_run.stdout, proc.stdout)
        other = run("--seed", 5, *args[2:], check=0)
        self.assertNotEqual(other.stdout, proc.stdout)

    def test_engine_sim_recovery_and_online(self):
        lines = json_lines(run("engine-sim", "-K", 2, "--inputs", 40, "--recovery",
                               "--recover-n", 10, "--online-elo", "--elo-games", 20,
                               check=0).stdout)
        for line in lines[:-1]:
            validate(line, "engine_iteration")
        self.assertGreater(sum(line["recovery_attempts"] for line in lines[:-1]), 0)
        self.assertEqual(lines[-1]["config"]["curriculum"], [0.3, 0.6])

    # -- refine --------------------------------------------------------------

    def test_refine(self):
        # Head-on view of the unit cube at depth 4: the silhouette is the
        # front face, a square of half-width 100 * 0.5 / 3.5 pixels.
        w = h = 96
        write_json(self.path("cam96.json"), centered_camera(w, h, 100.0))
        half = 100.0 * 0.5 / 3.5
        c = np.arange(w) + 0.5 - w / 2
        inside = np.abs(c) <= half
        target = (inside[None, :] & inside[:, None]).astype(np.uint8) * 255
        Image.fromarray(target).save(self.path("target.png"))
        write_json(self.path("init.json"), identity_pose([0.12, -0.08, 4.0]))
        out = self.path("refine")
        args = ["--out", out, "refine", "--mesh", self.cube, "--init", self.path("init.json"),
                "--target", self.path("target.png"), "--camera", self.path("cam96.json"),
                "--max-evals", 200]
        proc = run(*args, check=0)
        result = json_lines(proc.stdout)[0]
        validate(result, "refine")
        self.assertTrue(result["accepted"])
        self.assertGreater(result["iou"], result["iou_init"])
        self.assertGreater(result["iou"], 0.95)
        self.assertLessEqual(result["evaluations"], 200)
        pose = json.loads((out / "refined_pose.json").read_text())
        validate(pose, "pose")
        trace = (out / "trace.csv").read_text().splitlines()
        self.assertEqual(trace[0], "evaluation,best_iou")
        values = [float(row.split(",")[1]) for row in trace[1:]]
        self.assertEqual(len(values), result["evaluations"])
        self.assertEqual(values, sorted(values))
        self.assertEqual(run(*args, check=0).stdout, proc.stdout)

    def test_refine_missing_mesh_is_data_error(self):
        write_json(self.path("cam8.json"), centered_camera(8, 8, 8.0))
        Image.fromarray(np.full((8, 8), 255, dtype=np.uint8)).save(self.path("full8.png"))
        write_json(self.path("init8.json"), identity_pose([0, 0, 3]))
        proc = run("refine", "--mesh", self.path("none.obj"), "--init", self.path("init8.json"),
                   "--target", self.path("full8.png"), "--camera", self.path("cam8.json"))
        self.assertEqual(proc.returncode, 2)


if __name__ == "__main__":
    BINARY = Path(sys.argv[1]).resolve()
    SCHEMAS = Path(sys.argv[2]).resolve()
    unittest.main(argv=[sys.argv[0], "-v"])
