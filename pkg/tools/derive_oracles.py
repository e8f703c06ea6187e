#!/usr/bin/env python3
"""Recompute every hand-derivable expected value used by the test suite.

Each value is computed here from first principles with plain ``math``
arithmetic, independently of the library implementation. The frozen output
(tests/data/oracles.json) is what the tests assert against; regenerate with

    python tools/derive_oracles.py

and use ``--check`` to verify the committed file is in sync.
"""

import argparse
import json
import math
import os
import sys

EARTH_RADIUS_M = 6_371_000.0


# ---------------------------------------------------------------------------
# small independent reference helpers (deliberately naive, formula-level code)
# ---------------------------------------------------------------------------

def ref_softmax(row, tau):
    scaled = [v / tau for v in row]
    m = max(scaled)
    exps = [math.exp(v - m) for v in scaled]
    s = sum(exps)
    return [e / s for e in exps]


def ref_cross_entropy(prob_rows, labels):
    total = 0.0
    for row, y in zip(prob_rows, labels):
        total += math.log(row[y])
    return -total / len(prob_rows)


def ref_kl_rows(teacher_rows, student_rows):
    total = 0.0
    for t_row, s_row in zip(teacher_rows, student_rows):
        for t, s in zip(t_row, s_row):
            if t > 0.0:
                total += t * (math.log(t) - math.log(s))
    return total / len(teacher_rows)


def ref_cross_correlation(z1, z2):
    b = len(z1)
    d = len(z1[0])
    out = []
    for i in range(d):
        n1 = math.sqrt(sum(z1[r][i] ** 2 for r in range(b)))
        row = []
        for j in range(d):
            n2 = math.sqrt(sum(z2[r][j] ** 2 for r in range(b)))
            dot = sum(z1[r][i] * z2[r][j] for r in range(b))
            row.append(dot / (n1 * n2))
        out.append(row)
    return out


def ref_sem_value(c, lam):
    d = len(c)
    diag = sum((1.0 - c[i][i]) ** 2 for i in range(d))
    off = sum(c[i][j] ** 2 for i in range(d) for j in range(d) if i != j)
    return diag + lam * off


def ref_ldm(rows_q, rows_v, sigma):
    n = len(rows_q)
    total = 0.0
    for q in rows_q:
        for v in rows_v:
            sq = sum((a - b) ** 2 for a, b in zip(q, v))
            total += math.exp(-sq / sigma ** 2)
    return math.log(total / (n * n))


def ref_destination(lat, lon, bearing_deg, dist_m):
    phi1 = math.radians(lat)
    lam1 = math.radians(lon)
    theta = math.radians(bearing_deg)
    delta = dist_m / EARTH_RADIUS_M
    phi2 = math.asin(math.sin(phi1) * math.cos(delta)
                     + math.cos(phi1) * math.sin(delta) * math.cos(theta))
    lam2 = lam1 + math.atan2(math.sin(theta) * math.sin(delta) * math.cos(phi1),
                             math.cos(delta) - math.sin(phi1) * math.sin(phi2))
    lon2 = math.degrees(lam2)
    while lon2 > 180.0:
        lon2 -= 360.0
    while lon2 <= -180.0:
        lon2 += 360.0
    return math.degrees(phi2), lon2


def ref_haversine(lat1, lon1, lat2, lon2):
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def ref_bearing(lat1, lon1, lat2, lon2):
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dlam = math.radians(lon2 - lon1)
    x = math.sin(dlam) * math.cos(phi2)
    y = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.degrees(math.atan2(x, y)) % 360.0


# ---------------------------------------------------------------------------
# derived values
# ---------------------------------------------------------------------------

def build():
    vals = {}

    # dense algebra
    vals["matmul_2x2_2x1"] = [[1 * 5 + 2 * 6], [3 * 5 + 4 * 6]]
    vals["column_norms_diag12"] = [math.sqrt(1.0), math.sqrt(4.0)]

    # classification / divergence losses
    vals["ce_uniform_k2"] = math.log(2.0)
    vals["ce_two_rows"] = -(math.log(0.9) + math.log(0.8)) / 2.0
    vals["soften_logits20_tau2"] = ref_softmax([2.0, 0.0], 2.0)
    vals["kl_hard_vs_uniform"] = ref_kl_rows([[1.0, 0.0]], [[0.5, 0.5]])
    vals["kl_uniform_vs_9010"] = ref_kl_rows([[0.5, 0.5]], [[0.9, 0.1]])

    # gram / correlation losses
    g1 = [[1.0, 0.0], [0.0, 1.0]]   # z1^T z1 for z1 = I2
    g2 = [[0.0, 0.0], [0.0, 0.0]]
    vals["gram_identity_vs_zero"] = sum(
        (g1[i][j] - g2[i][j]) ** 2 for i in range(2) for j in range(2)) / 4.0

    cc = ref_cross_correlation([[1.0, 0.0], [0.0, 1.0]], [[1.0, 1.0], [0.0, 1.0]])
    vals["crosscorr_example"] = cc

    # columns (1,0) and (0.5, sqrt(3)/2) of equal unit norm give C = [[1,.5],[.5,1]]
    zc = [[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]
    c_half = ref_cross_correlation(zc, zc)
    vals["sem_inputs_half"] = zc
    vals["sem_value_half_lambda1"] = ref_sem_value(c_half, 1.0)

    z_a = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
    z_b = [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
    vals["sem_inputs_zero_a"] = z_a
    vals["sem_inputs_zero_b"] = z_b
    vals["sem_value_zero_lambda2"] = ref_sem_value(ref_cross_correlation(z_a, z_b), 2.0)

    vals["rbf_unit_distance"] = math.exp(-1.0)
    vals["ldm_two_rows_unit_sigma"] = ref_ldm([[0.0], [1.0]], [[0.0], [1.0]], 1.0)
    vals["ldm_two_rows_sigma2"] = ref_ldm([[0.0], [2.0]], [[0.0], [2.0]], 2.0)
    vals["dcm_two_rows_unit_sigma"] = 2.0 * vals["ldm_two_rows_unit_sigma"]
    vals["overall_example"] = 1.0 + 0.5 * (2.0 + (-1.0))
    vals["feature_mse_ones"] = (1.0 + 1.0) / 2.0

    # optimizer arithmetic
    vals["sgd_one_step"] = {"velocity": 1.0, "param": 1.0 - 0.1 * 1.0}
    vals["sgd_two_steps_velocity_coeff"] = 0.9 * 1.0 + 1.0
    vals["cosine_lr_midpoint_301"] = (0.1 + 1e-6) / 2.0

    # diagnostics
    cc_feat = ref_cross_correlation([[1.0, 1.0], [0.0, 1.0]], [[1.0, 1.0], [0.0, 1.0]])
    vals["selfsim_offdiag_example"] = cc_feat[0][1]
    vals["pgm_pixel_mid"] = math.floor((0.0 + 1.0) / 2.0 * 255.0 + 0.5)
    vals["pgm_pixel_lo"] = math.floor((-1.0 + 1.0) / 2.0 * 255.0 + 0.5)
    vals["pgm_pixel_hi"] = math.floor((1.0 + 1.0) / 2.0 * 255.0 + 0.5)
    # three collinear 1-d points at 0, 1, 2 -> pair distances {1, 1, 2}
    width = 2.0 / 50.0
    vals["hist_collinear"] = {
        "bin_width": width,
        "bin_of_one": min(49, int(1.0 / width)),
        "bin_of_two": min(49, int(2.0 / width)),
    }

    # pointing geometry, stage by stage
    vals["geo_box_quarter"] = {"azimuth": 1024.0 / 4096.0 * 360.0,
                               "distance": (4096.0 - 4096.0) / 4096.0 * 10000.0}
    lat_f, lon_f = ref_destination(0.0, 0.0, 0.0, 111194.9)
    vals["geo_forward_north_degree"] = {"lat": lat_f, "lon": lon_f}
    vals["geo_inverse_equator_1deg"] = {
        "bearing": ref_bearing(0.0, 0.0, 0.0, 1.0),
        "distance": ref_haversine(0.0, 0.0, 0.0, 1.0),
    }
    vals["geo_meter_per_degree_arc"] = EARTH_RADIUS_M * math.pi / 180.0
    vals["geo_pan_wrap"] = (350.0 + 20.0) % 360.0
    vals["geo_tilt_equal"] = math.degrees(math.atan(1.0))
    vals["geo_width_one_degree"] = 2.0 * 1000.0 * math.tan(math.radians(1.0))
    # literal mode treats the printed angle value as a raw arctan argument
    vals["geo_width_one_degree_literal"] = math.atan(1.0) * 2.0 * 1000.0
    vals["geo_zoom_example"] = 2000.0 * 0.01 / (2.0 * 10.0 * 0.1)

    # full chain fixture: radar at (18.25 N, 109.50 E), 4096x4096 image,
    # 10 km range, detection box (2043, 2043, 10, 10); optics 500 m due east
    # of the radar, mounted 20 m high, boresight aligned north (B = 0),
    # CCD length 7.2 mm, minimum focal length 6 mm, radar beam width 0.2 deg.
    X = Y = 4096.0
    R = 10_000.0
    bx, by, bw, bh = 2043.0, 2043.0, 10.0, 10.0
    radar = (18.25, 109.50)
    a1 = (bx + bw / 2.0) / X * 360.0
    d1 = (Y - (by + bh / 2.0)) / Y * R
    target = ref_destination(radar[0], radar[1], a1, d1)
    optics = ref_destination(radar[0], radar[1], 90.0, 500.0)
    a2 = ref_bearing(optics[0], optics[1], target[0], target[1])
    d2 = ref_haversine(optics[0], optics[1], target[0], target[1])
    pan = (a2 + 0.0) % 360.0
    tilt = math.degrees(math.atan(20.0 / d2))
    alpha = 180.0 * bw / X - 0.2
    width_m = 2.0 * d2 * math.tan(math.radians(alpha))
    zoom = d2 * 0.0072 / (2.0 * width_m * 0.006)
    vals["geo_fixture"] = {
        "a1": a1, "d1": d1,
        "target_lat": target[0], "target_lon": target[1],
        "optics_lat": optics[0], "optics_lon": optics[1],
        "a2": a2, "d2": d2,
        "pan": pan, "tilt": tilt,
        "alpha_deg": alpha, "width_m": width_m, "zoom": zoom,
    }

    return vals


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true",
                        help="verify the frozen file matches instead of rewriting it")
    parser.add_argument("--out", default=os.path.join(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        "tests", "data", "oracles.json"))
    args = parser.parse_args(argv)

    vals = build()
    text = json.dumps(vals, indent=2, sort_keys=True) + "\n"
    if args.check:
        with open(args.out) as fh:
            if fh.read() != text:
                print("oracles.json is out of date; rerun tools/derive_oracles.py")
                return 1
        print("oracles.json is up to date")
        return 0
    os.makedirs(os.path.dirname(args.out), exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(text)
    print(f"wrote {len(vals)} reference values to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
