"""Vectorized numpy version of the row kernels.

Jacobian slot layout (column -1 marks an unused slot)::

    u1 row (p, k):  [self, k-1, k+1, u2_p, u3_m, u4_m, -, -]   coupling only at k = 0
    u2 row p:       [self, left, right, u1_p0, u3_m, u4_m, -, -]
    u3 row m:       [self, left, right, u1_p0, u2_p, u4_m, -, -]
    u4 row m:       [self, left, right, u3_m, u3_left, u3_right, u1_p0, u2_p]
"""
import numpy as np

from . import _formulas as F

_G2 = 1.0 / np.sqrt(3.0)


def _reaction(u, ints, sc, eint, p):
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    m = eint[p, 0]
    gam = sc[12 + eint[p, 1]]
    lrate, alpha, kappa = sc[2], sc[4], sc[5]
    us = u[p * nm]
    ye = u[o3 + m]
    ys = F.sigmoid(us)
    lam = u[o2 + p] - u[o4 + m] + us + gam * (2.0 * ys - 1.0) - F.f_elec(ye, kappa)
    gp = lrate * F.bv_prime(lam, alpha)
    return (lrate * F.bv(lam, alpha), gp * (1.0 + 2.0 * gam * ys * (1.0 - ys)), gp,
            -gp * F.f_elec_dy(ye, kappa), -gp)


def _edge(ya, yb, c0, kappa, scale, fn, dfn):
    v = np.zeros_like(ya)
    da = np.zeros_like(ya)
    db = np.zeros_like(ya)
    for x in (-_G2, _G2):
        na, nb = 0.5 * (1.0 - x), 0.5 * (1.0 + x)
        yg = na * ya + nb * yb
        f = fn(yg, c0, kappa)
        fp = dfn(yg, c0, kappa)
        v += f
        da += fp * na
        db += fp * nb
    return scale * v, scale * da, scale * db


def _micro_rows(u, up, r, want_jac, ints, sc, eint, mg, mmass, res, cols, vals):
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    ch, dt, dref, hm = sc[0], sc[1], sc[3], sc[11]
    p = r // nm
    k = r - p * nm
    e = eint[p, 1]
    gam = sc[12 + e]
    rt = sc[14 + e]
    cm = rt * rt * ch / dt
    sk = dref / (hm * hm)
    yk = F.sigmoid(u[r])
    ypk = F.sigmoid(up[r])
    val = np.zeros(r.shape)
    dk = np.zeros(r.shape)
    for side in (0, 1):
        has = k > 0 if side == 0 else k < nm - 1
        rr = r[has]
        kk = k[has]
        j = kk - 1 if side == 0 else kk
        other = rr - 1 if side == 0 else rr + 1
        yo = F.sigmoid(u[other])
        ypo = F.sigmoid(up[other])
        ykh, ypkh, gamh = yk[has], ypk[has], gam[has]
        a = np.zeros(rr.shape)
        dao = np.zeros(rr.shape)
        dak = np.zeros(rr.shape)
        for g in range(3):
            wq, n0, n1 = mg[j, g, 0], mg[j, g, 1], mg[j, g, 2]
            if side == 0:
                yg = n0 * yo + n1 * ykh
                no, nk = n0, n1
            else:
                yg = n0 * ykh + n1 * yo
                nk, no = n0, n1
            a += wq * F.crowd(yg, gamh)
            cd = wq * F.crowd_dy(yg, gamh)
            dao += cd * no
            dak += cd * nk
        if side == 0:
            mass = mmass[j, 1] * (yo - ypo) + mmass[j, 2] * (ykh - ypkh)
            mkk = mmass[j, 2]
        else:
            mass = mmass[j, 0] * (ykh - ypkh) + mmass[j, 1] * (yo - ypo)
            mkk = mmass[j, 0]
        cmh = cm[has]
        val[has] += cmh * mass + sk * a * (ykh - yo)
        if want_jac:
            dk[has] += cmh * mkk + sk * (a + dak * (ykh - yo))
            idx = np.flatnonzero(has)
            cols[idx, 1 + side] = other
            vals[idx, 1 + side] = (cmh * mmass[j, 1] + sk * (-a + dao * (ykh - yo))) * yo * (1.0 - yo)
    if want_jac:
        cols[:, 0] = r
        vals[:, 0] = dk * yk * (1.0 - yk)
    surf = np.flatnonzero(k == 0)
    if surf.size:
        ps = p[surf]
        rv = _reaction(u, ints, sc, eint, ps)
        rts = rt[surf]
        val[surf] += rts * rv[0]
        if want_jac:
            m = eint[ps, 0]
            vals[surf, 0] += rts * rv[1]
            cols[surf, 3] = o2 + ps
            vals[surf, 3] = rts * rv[2]
            cols[surf, 4] = o3 + m
            vals[surf, 4] = rts * rv[3]
            cols[surf, 5] = o4 + m
            vals[surf, 5] = rts * rv[4]
    res[:] = val


def _solid_rows(u, r, want_jac, ints, sc, eint, eflt, res, cols, vals):
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    p = r - o2
    dirich = eint[p, 4] == 1
    val = np.zeros(r.shape)
    dk = np.zeros(r.shape)
    for side in (0, 1):
        q = eint[p, 2 + side]
        has = (q >= 0) & ~dirich
        c = np.where(has, eflt[p, 2 + side] / np.where(has, eflt[p, side], 1.0), 0.0)
        qq = np.where(has, q, 0)
        val += np.where(has, c * (u[r] - u[o2 + qq]), 0.0)  # masks the placeholder qq = 0
        dk += c
        if want_jac:
            cols[:, 1 + side] = np.where(has, o2 + qq, -1)
            vals[:, 1 + side] = -c
    nd = np.flatnonzero(~dirich)
    pn = p[nd]
    rv = _reaction(u, ints, sc, eint, pn)
    w = eflt[pn, 4]
    val[nd] += w * rv[0]
    if want_jac:
        m = eint[pn, 0]
        cols[:, 0] = r
        vals[:, 0] = dk
        vals[nd, 0] += w * rv[2]
        cols[nd, 3] = pn * nm
        vals[nd, 3] = w * rv[1]
        cols[nd, 4] = o3 + m
        vals[nd, 4] = w * rv[3]
        cols[nd, 5] = o4 + m
        vals[nd, 5] = w * rv[4]
    di = np.flatnonzero(dirich)
    if di.size:
        pd = p[di]
        c = eflt[pd, 3] / eflt[pd, 1]
        val[di] = c * u[r[di]]
        if want_jac:
            vals[di, 0] = c
    res[:] = val


def _mass_rows(u, up, r, want_jac, ints, sc, eint, eflt, mint, mflt, elt, res, cols, vals):
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    ch, dt, kappa, c0, tcat, d_e = sc[0], sc[1], sc[5], sc[6], sc[7], sc[8]
    m = r - o3
    ym = u[r]
    cmass = mflt[m, 0] * ch / dt
    val = cmass * (F.n_salt(ym, c0, kappa) - F.n_salt(up[r], c0, kappa))
    dk = cmass * F.n_salt_dy(ym, c0, kappa)
    for side in (0, 1):
        q = mint[m, side]
        has = q >= 0
        idx = np.flatnonzero(has)
        qh = q[has]
        el = mint[m[has], 2 + side]
        yq = u[o3 + qh]
        ymh = ym[has]
        scale = elt[el, 1] * d_e / (2.0 * elt[el, 0])
        if side == 0:
            kv, kq, km = _edge(yq, ymh, c0, kappa, scale, F.ngam, F.ngam_dy)
        else:
            kv, km, kq = _edge(ymh, yq, c0, kappa, scale, F.ngam, F.ngam_dy)
        val[idx] += kv * (ymh - yq)
        if want_jac:
            dk[idx] += kv + km * (ymh - yq)
            cols[idx, 1 + side] = o3 + qh
            vals[idx, 1 + side] = -kv + kq * (ymh - yq)
    if want_jac:
        cols[:, 0] = r
        vals[:, 0] = dk
    pm = mint[m, 4]
    idx = np.flatnonzero(pm >= 0)
    if idx.size:
        p = pm[idx]
        rv = _reaction(u, ints, sc, eint, p)
        c = -sc[16 + eint[p, 1]] * (1.0 - tcat) * eflt[p, 4]
        val[idx] += c * rv[0]
        if want_jac:
            vals[idx, 0] += c * rv[3]
            cols[idx, 3] = p * nm
            vals[idx, 3] = c * rv[1]
            cols[idx, 4] = o2 + p
            vals[idx, 4] = c * rv[2]
            cols[idx, 5] = o4 + m[idx]
            vals[idx, 5] = c * rv[4]
    res[:] = val


def _charge_rows(u, r, want_jac, ints, sc, eint, eflt, mint, elt, res, cols, vals):
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    kappa, c0, lam_e, s_e = sc[5], sc[6], sc[9], sc[10]
    m = r - o4
    ym = u[o3 + m]
    val = np.zeros(r.shape)
    dphi = np.zeros(r.shape)
    dy = np.zeros(r.shape)
    for side in (0, 1):
        q = mint[m, side]
        has = q >= 0
        idx = np.flatnonzero(has)
        qh = q[has]
        el = mint[m[has], 2 + side]
        yq = u[o3 + qh]
        ymh = ym[has]
        base = elt[el, 1] / (2.0 * elt[el, 0])
        if side == 0:
            sv, sq, sm = _edge(yq, ymh, c0, kappa, base * s_e, F.ngam, F.ngam_dy)
            gv, gq, gm = _edge(yq, ymh, c0, kappa, base * lam_e, F.n_salt, F.n_salt_dy)
        else:
            sv, sm, sq = _edge(ymh, yq, c0, kappa, base * s_e, F.ngam, F.ngam_dy)
            gv, gm, gq = _edge(ymh, yq, c0, kappa, base * lam_e, F.n_salt, F.n_salt_dy)
        dyv = ymh - yq
        dpv = u[r[has]] - u[o4 + qh]
        val[idx] += sv * dyv + gv * dpv
        if want_jac:
            dphi[idx] += gv
            dy[idx] += sv + sm * dyv + gm * dpv
            cols[idx, 1 + side] = o4 + qh
            vals[idx, 1 + side] = -gv
            cols[idx, 4 + side] = o3 + qh
            vals[idx, 4 + side] = -sv + sq * dyv + gq * dpv
    if want_jac:
        cols[:, 0] = r
        vals[:, 0] = dphi
        cols[:, 3] = o3 + m
        vals[:, 3] = dy
    pm = mint[m, 4]
    idx = np.flatnonzero(pm >= 0)
    if idx.size:
        p = pm[idx]
        rv = _reaction(u, ints, sc, eint, p)
        c = -sc[16 + eint[p, 1]] * eflt[p, 4]
        val[idx] += c * rv[0]
        if want_jac:
            vals[idx, 0] += c * rv[4]
            vals[idx, 3] += c * rv[3]
            cols[idx, 6] = p * nm
            vals[idx, 6] = c * rv[1]
            cols[idx, 7] = o2 + p
            vals[idx, 7] = c * rv[2]
    res[:] = val


def _stencil_u3_ok(u, rows, ints, mint, eint):
    """True when every electrolyte mole fraction touched by ``rows`` lies in (0, 0.5)."""
    nm, o2, o3, o4 = ints[1], ints[4], ints[5], ints[6]
    parts = []
    r = rows[rows < o2]
    p = r // nm
    parts.append(eint[p[r - p * nm == 0], 0])
    r = rows[(rows >= o2) & (rows < o3)]
    p = r - o2
    parts.append(eint[p[eint[p, 4] == 0], 0])
    r = rows[rows >= o3]
    m = np.where(r < o4, r - o3, r - o4)
    parts.extend([m, mint[m, 0], mint[m, 1]])
    idx = np.concatenate(parts)
    idx = idx[idx >= 0]
    y = u[o3 + idx]
    return bool(np.all((y > 0.0) & (y < 0.5)))


def eval_rows(u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt, elt, mg, mmass,
              res, cols, vals):
    """Same contract as the numba kernel; returns 1 on success, 0 on failure."""
    o2, o3, o4 = ints[4], ints[5], ints[6]
    if not _stencil_u3_ok(u, rows, ints, mint, eint):
        return 0
    if want_jac:
        cols[:] = -1
        vals[:] = 0.0
    groups = (rows < o2, (rows >= o2) & (rows < o3), (rows >= o3) & (rows < o4), rows >= o4)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for g, mask in enumerate(groups):
            idx = np.flatnonzero(mask)
            if idx.size == 0:
                continue
            r = rows[idx]
            rres = np.empty(idx.size)
            rc = np.full((idx.size, 8), -1, dtype=np.int64) if want_jac else None
            rvl = np.zeros((idx.size, 8)) if want_jac else None
            if g == 0:
                _micro_rows(u, up, r, want_jac, ints, sc, eint, mg, mmass, rres, rc, rvl)
            elif g == 1:
                _solid_rows(u, r, want_jac, ints, sc, eint, eflt, rres, rc, rvl)
            elif g == 2:
                _mass_rows(u, up, r, want_jac, ints, sc, eint, eflt, mint, mflt, elt, rres, rc, rvl)
            else:
                _charge_rows(u, r, want_jac, ints, sc, eint, eflt, mint, elt, rres, rc, rvl)
            res[idx] = rres
            if want_jac:
                cols[idx] = rc
                vals[idx] = rvl
    if not np.all(np.isfinite(res[: rows.size])):
        return 0
    return 1


def reduced_system(a, vcl, clr, closure, u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt,
                   elt, mg, mmass, W, blocks, VS, vsr, rhs, res, cols, vals, JV, r_out, J_out):
    """Same contract as the numba kernel; the range arrays ``clr`` and ``vsr``
    are not needed since zero blocks cost little in vectorized form."""
    u[closure] = vcl @ a
    ok = eval_rows(u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt, elt, mg, mmass,
                   res, cols, vals)
    if ok == 0:
        return 0
    for q0, q1, p0, p1 in blocks:
        r_out[q0:q1] = W[q0:q1, p0:p1] @ res[p0:p1] + sc[0] * rhs[q0:q1]
    if want_jac:
        JV[:] = np.einsum("ps,psr->pr", vals, VS)
        for q0, q1, p0, p1 in blocks:
            J_out[q0:q1] = W[q0:q1, p0:p1] @ JV[p0:p1]
    return 1


def reduced_newton(a_prev, vcl, clr, closure, u, up, rows, ints, sc, eint, eflt, mint, mflt, elt,
                   mg, mmass, W, blocks, VS, vsr, rhs, res, cols, vals, JV, r, J, a_out, rtol,
                   max_iter, max_bisections, res_atol):
    """Same contract as the numba kernel."""
    up[closure] = vcl @ a_prev
    a = a_prev.copy()
    evals = 1
    args = (vcl, clr, closure, u, up, rows, True, ints, sc, eint, eflt, mint, mflt, elt, mg, mmass,
            W, blocks, VS, vsr, rhs, res, cols, vals, JV, r, J)
    if reduced_system(a, *args) == 0:
        return 0, 0, evals * rows.size
    for it in range(max_iter + 1):
        if np.linalg.norm(r) <= res_atol:
            a_out[:] = a
            return 1, it, evals * rows.size
        if it == max_iter:
            break
        try:
            da = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return -1, it, evals * rows.size
        step = 1.0
        ok = 0
        for _ in range(max_bisections + 1):
            trial = a + step * da
            evals += 1
            ok = reduced_system(trial, *args)
            if ok == 1:
                break
            step *= 0.5
        if ok == 0:
            return -3, it, evals * rows.size
        a = trial
        if not np.all(np.isfinite(r)):
            return -4, it + 1, evals * rows.size
        if step == 1.0 and np.linalg.norm(da) <= rtol * np.linalg.norm(a):
            a_out[:] = a
            return 1, it + 1, evals * rows.size
    return -2, max_iter, evals * rows.size
