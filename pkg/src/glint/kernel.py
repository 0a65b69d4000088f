"""JIT-compiled scalar path-tracing kernel.

One path at a time, plain float math: this is what keeps ground-truth
generation fast enough to interleave with training on a CPU. The kernel
consumes the same counter-based per-(pixel, sample, bounce) random streams
as glint.rng, so results are bitwise reproducible and independent of patch
decomposition or threading. Compiled once per process and cached on disk.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U64 = np.uint64
_GAMMA = U64(0x9E3779B97F4A7C15)
_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

_EPS = 1e-7
_OFFSET = 1e-6

KIND_DIFFUSE = 0
KIND_GLOSSY = 1
KIND_MIRROR = 2
KIND_EMITTER = 3


@njit(cache=True, inline="always")
def _mix(z):
    z = z + _GAMMA
    z = (z ^ (z >> U64(30))) * _M1
    z = (z ^ (z >> U64(27))) * _M2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def _u01(key, idx):
    return float(_mix(key + (idx + U64(1)) * _GAMMA) >> U64(11)) * _INV53


@njit(cache=True, inline="always")
def _intersect(ox, oy, oz, dx, dy, dz,
               q_origin, q_normal, q_du, q_dv, q_offset, s_center, s_radius):
    best = np.inf
    prim = -1
    for i in range(q_origin.shape[0]):
        nx = q_normal[i, 0]
        ny = q_normal[i, 1]
        nz = q_normal[i, 2]
        denom = dx * nx + dy * ny + dz * nz
        if abs(denom) < 1e-12:
            continue
        t = (q_offset[i] - (ox * nx + oy * ny + oz * nz)) / denom
        if t <= _EPS or t >= best:
            continue
        px = ox + t * dx - q_origin[i, 0]
        py = oy + t * dy - q_origin[i, 1]
        pz = oz + t * dz - q_origin[i, 2]
        a = px * q_du[i, 0] + py * q_du[i, 1] + pz * q_du[i, 2]
        if a < 0.0 or a > 1.0:
            continue
        b = px * q_dv[i, 0] + py * q_dv[i, 1] + pz * q_dv[i, 2]
        if b < 0.0 or b > 1.0:
            continue
        best = t
        prim = i
    nq = q_origin.shape[0]
    for j in range(s_center.shape[0]):
        cx = ox - s_center[j, 0]
        cy = oy - s_center[j, 1]
        cz = oz - s_center[j, 2]
        bh = cx * dx + cy * dy + cz * dz
        c = cx * cx + cy * cy + cz * cz - s_radius[j] * s_radius[j]
        disc = bh * bh - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t = -bh - sq
        if t <= _EPS:
            t = -bh + sq
        if t <= _EPS or t >= best:
            continue
        best = t
        prim = nq + j
    return best, prim


@njit(cache=True, inline="always")
def _occluded(ox, oy, oz, dx, dy, dz, t_max,
              q_origin, q_normal, q_du, q_dv, q_offset, s_center, s_radius):
    bound = t_max * (1.0 - 1e-6)
    for i in range(q_origin.shape[0]):
        nx = q_normal[i, 0]
        ny = q_normal[i, 1]
        nz = q_normal[i, 2]
        denom = dx * nx + dy * ny + dz * nz
        if abs(denom) < 1e-12:
            continue
        t = (q_offset[i] - (ox * nx + oy * ny + oz * nz)) / denom
        if t <= _EPS or t >= bound:
            continue
        px = ox + t * dx - q_origin[i, 0]
        py = oy + t * dy - q_origin[i, 1]
        pz = oz + t * dz - q_origin[i, 2]
        a = px * q_du[i, 0] + py * q_du[i, 1] + pz * q_du[i, 2]
        if a < 0.0 or a > 1.0:
            continue
        b = px * q_dv[i, 0] + py * q_dv[i, 1] + pz * q_dv[i, 2]
        if b < 0.0 or b > 1.0:
            continue
        return True
    for j in range(s_center.shape[0]):
        cx = ox - s_center[j, 0]
        cy = oy - s_center[j, 1]
        cz = oz - s_center[j, 2]
        bh = cx * dx + cy * dy + cz * dz
        c = cx * cx + cy * cy + cz * cz - s_radius[j] * s_radius[j]
        disc = bh * bh - c
        if disc <= 0.0:
            continue
        sq = math.sqrt(disc)
        t = -bh - sq
        if t <= _EPS:
            t = -bh + sq
        if t > _EPS and t < bound:
            return True
    return False


@njit(cache=True, inline="always")
def _basis(nx, ny, nz):
    """Orthonormal tangent/bitangent (Frisvad)."""
    sign = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (sign + nz)
    b = nx * ny * a
    tx = 1.0 + sign * nx * nx * a
    ty = sign * b
    tz = -sign * nx
    bx = b
    by = sign + ny * ny * a
    bz = -ny
    return tx, ty, tz, bx, by, bz


@njit(cache=True, nogil=True)
def trace_pixels(o0, d0, keys, spp, stride, max_depth, rr_start,
                 q_origin, q_eu, q_ev, q_normal, q_du, q_dv, q_offset,
                 s_center, s_radius,
                 kind, albedo, roughness, emission, prim_light_area, n_lights,
                 light_ids, env, out):
    """Accumulate `spp` path samples per pixel into out (n_px, 3)."""
    n_px = o0.shape[0]
    nq = q_origin.shape[0]
    has_env = env[0] > 0.0 or env[1] > 0.0 or env[2] > 0.0
    for p in range(n_px):
        key = keys[p]
        acc_r = 0.0
        acc_g = 0.0
        acc_b = 0.0
        for s in range(spp):
            base = U64(s) * U64(stride)
            ox = o0[p, 0]
            oy = o0[p, 1]
            oz = o0[p, 2]
            dx = d0[p, 0]
            dy = d0[p, 1]
            dz = d0[p, 2]
            tr = 1.0
            tg = 1.0
            tb = 1.0
            spec_prev = True
            prev_pdf = 0.0
            for depth in range(1, max_depth + 1):
                t, prim = _intersect(ox, oy, oz, dx, dy, dz, q_origin, q_normal,
                                     q_du, q_dv, q_offset, s_center, s_radius)
                if prim < 0:
                    if has_env:
                        acc_r += tr * env[0]
                        acc_g += tg * env[1]
                        acc_b += tb * env[2]
                    break
                # geometric normal at the hit
                if prim < nq:
                    gnx = q_normal[prim, 0]
                    gny = q_normal[prim, 1]
                    gnz = q_normal[prim, 2]
                else:
                    j = prim - nq
                    inv_r = 1.0 / s_radius[j]
                    gnx = (ox + t * dx - s_center[j, 0]) * inv_r
                    gny = (oy + t * dy - s_center[j, 1]) * inv_r
                    gnz = (oz + t * dz - s_center[j, 2]) * inv_r
                cos_in = gnx * dx + gny * dy + gnz * dz

                # emission seen from the front side; MIS against NEE except
                # after delta bounces and at the primary hit
                er = emission[prim, 0]
                eg = emission[prim, 1]
                eb = emission[prim, 2]
                if (er > 0.0 or eg > 0.0 or eb > 0.0) and cos_in < 0.0:
                    w = 1.0
                    if not spec_prev:
                        pdf_l = t * t / ((-cos_in) * prim_light_area[prim] * n_lights)
                        w = prev_pdf * prev_pdf / (prev_pdf * prev_pdf + pdf_l * pdf_l)
                    acc_r += tr * er * w
                    acc_g += tg * eg * w
                    acc_b += tb * eb * w

                if depth == max_depth:
                    break
                k = kind[prim]
                if k == KIND_EMITTER:
                    break

                hx = ox + t * dx
                hy = oy + t * dy
                hz = oz + t * dz
                if cos_in > 0.0:
                    nsx = -gnx
                    nsy = -gny
                    nsz = -gnz
                else:
                    nsx = gnx
                    nsy = gny
                    nsz = gnz
                alb_r = albedo[prim, 0]
                alb_g = albedo[prim, 1]
                alb_b = albedo[prim, 2]
                slot = base + U64((depth - 1) * 8)

                # mirror reflection direction, shared by glossy lobe and mirror
                rdx = dx - 2.0 * cos_in * gnx
                rdy = dy - 2.0 * cos_in * gny
                rdz = dz - 2.0 * cos_in * gnz

                # --- next-event estimation at non-delta vertices
                if n_lights > 0 and (k == KIND_DIFFUSE or k == KIND_GLOSSY):
                    li = int(_u01(key, slot) * n_lights)
                    if li >= n_lights:
                        li = n_lights - 1
                    lp = light_ids[li]
                    u1 = _u01(key, slot + U64(1))
                    u2 = _u01(key, slot + U64(2))
                    if lp < nq:
                        lx = q_origin[lp, 0] + u1 * q_eu[lp, 0] + u2 * q_ev[lp, 0]
                        ly = q_origin[lp, 1] + u1 * q_eu[lp, 1] + u2 * q_ev[lp, 1]
                        lz = q_origin[lp, 2] + u1 * q_eu[lp, 2] + u2 * q_ev[lp, 2]
                        lnx = q_normal[lp, 0]
                        lny = q_normal[lp, 1]
                        lnz = q_normal[lp, 2]
                    else:
                        jl = lp - nq
                        zs = 1.0 - 2.0 * u1
                        rs = math.sqrt(max(0.0, 1.0 - zs * zs))
                        phi_l = 2.0 * math.pi * u2
                        lnx = rs * math.cos(phi_l)
                        lny = rs * math.sin(phi_l)
                        lnz = zs
                        lx = s_center[jl, 0] + s_radius[jl] * lnx
                        ly = s_center[jl, 1] + s_radius[jl] * lny
                        lz = s_center[jl, 2] + s_radius[jl] * lnz
                    sx = hx + nsx * _OFFSET
                    sy = hy + nsy * _OFFSET
                    sz = hz + nsz * _OFFSET
                    wx = lx - sx
                    wy = ly - sy
                    wz = lz - sz
                    dist = math.sqrt(wx * wx + wy * wy + wz * wz)
                    if dist > 1e-9:
                        inv = 1.0 / dist
                        wx *= inv
                        wy *= inv
                        wz *= inv
                        cos_x = nsx * wx + nsy * wy + nsz * wz
                        cos_l = -(lnx * wx + lny * wy + lnz * wz)
                        if cos_x > 0.0 and cos_l > 1e-9:
                            area = prim_light_area[lp]
                            if k == KIND_DIFFUSE:
                                f_r = alb_r / math.pi
                                f_g = alb_g / math.pi
                                f_b = alb_b / math.pi
                                pdf_dir = cos_x / math.pi
                            else:
                                e = 2.0 / max(roughness[prim], 1e-4) ** 2 - 2.0
                                cos_a = rdx * wx + rdy * wy + rdz * wz
                                if cos_a < 0.0:
                                    cos_a = 0.0
                                lobe = cos_a ** e
                                norm_f = (e + 2.0) / (2.0 * math.pi) * lobe
                                f_r = alb_r * norm_f
                                f_g = alb_g * norm_f
                                f_b = alb_b * norm_f
                                pdf_dir = (e + 1.0) / (2.0 * math.pi) * lobe
                            pdf_sa = dist * dist / (cos_l * area * n_lights)
                            if pdf_sa > 0.0 and (f_r > 0.0 or f_g > 0.0 or f_b > 0.0):
                                if not _occluded(sx, sy, sz, wx, wy, wz, dist,
                                                 q_origin, q_normal, q_du, q_dv,
                                                 q_offset, s_center, s_radius):
                                    w_mis = pdf_sa * pdf_sa / (pdf_sa * pdf_sa
                                                               + pdf_dir * pdf_dir)
                                    scale = cos_x / pdf_sa * w_mis
                                    ler = emission[lp, 0]
                                    leg = emission[lp, 1]
                                    leb = emission[lp, 2]
                                    acc_r += tr * f_r * ler * scale
                                    acc_g += tg * f_g * leg * scale
                                    acc_b += tb * f_b * leb * scale

                # --- continuation direction
                if k == KIND_MIRROR:
                    ndx = rdx
                    ndy = rdy
                    ndz = rdz
                    new_pdf = 0.0
                    spec_prev = True
                else:
                    u3 = _u01(key, slot + U64(3))
                    u4 = _u01(key, slot + U64(4))
                    if k == KIND_DIFFUSE:
                        tx, ty, tz, bx, by, bz = _basis(nsx, nsy, nsz)
                        rr = math.sqrt(u3)
                        phi = 2.0 * math.pi * u4
                        xc = rr * math.cos(phi)
                        yc = rr * math.sin(phi)
                        zc = math.sqrt(max(0.0, 1.0 - u3))
                        ndx = xc * tx + yc * bx + zc * nsx
                        ndy = xc * ty + yc * by + zc * nsy
                        ndz = xc * tz + yc * bz + zc * nsz
                        cosd = ndx * nsx + ndy * nsy + ndz * nsz
                        if cosd < 0.0:
                            cosd = 0.0
                        new_pdf = cosd / math.pi
                        tr *= alb_r
                        tg *= alb_g
                        tb *= alb_b
                    else:  # glossy: normalized Phong lobe about the reflection
                        e = 2.0 / max(roughness[prim], 1e-4) ** 2 - 2.0
                        cos_a = u3 ** (1.0 / (e + 1.0))
                        sin_a = math.sqrt(max(0.0, 1.0 - cos_a * cos_a))
                        phi = 2.0 * math.pi * u4
                        tx, ty, tz, bx, by, bz = _basis(rdx, rdy, rdz)
                        ndx = (math.cos(phi) * sin_a) * tx + (math.sin(phi) * sin_a) * bx + cos_a * rdx
                        ndy = (math.cos(phi) * sin_a) * ty + (math.sin(phi) * sin_a) * by + cos_a * rdy
                        ndz = (math.cos(phi) * sin_a) * tz + (math.sin(phi) * sin_a) * bz + cos_a * rdz
                        cos_o = ndx * nsx + ndy * nsy + ndz * nsz
                        if cos_o <= 0.0:
                            break  # sampled below the surface: dead path
                        new_pdf = (e + 1.0) / (2.0 * math.pi) * cos_a ** e
                        gain = (e + 2.0) / (e + 1.0) * cos_o
                        tr *= alb_r * gain
                        tg *= alb_g * gain
                        tb *= alb_b * gain
                    spec_prev = False
                    if tr <= 0.0 and tg <= 0.0 and tb <= 0.0:
                        break

                # Russian roulette from rr_start, survival = max albedo (mirror 1)
                if depth >= rr_start and k != KIND_MIRROR:
                    surv = alb_r
                    if alb_g > surv:
                        surv = alb_g
                    if alb_b > surv:
                        surv = alb_b
                    if _u01(key, slot + U64(5)) >= surv:
                        break
                    inv_s = 1.0 / surv
                    tr *= inv_s
                    tg *= inv_s
                    tb *= inv_s

                side = nsx * ndx + nsy * ndy + nsz * ndz
                off = _OFFSET if side >= 0.0 else -_OFFSET
                ox = hx + nsx * off
                oy = hy + nsy * off
                oz = hz + nsz * off
                dx = ndx
                dy = ndy
                dz = ndz
                prev_pdf = new_pdf
        out[p, 0] = acc_r / spp
        out[p, 1] = acc_g / spp
        out[p, 2] = acc_b / spp
