"""Row-wise residual and Jacobian kernels, loop form for numba.

Every requested row is evaluated independently from the state entries in its
stencil, so a restricted evaluation returns exactly the entries of a full one.
Jacobian rows use a fixed slot layout of width 8 (see ``kernels_numpy``);
unused slots carry column -1.
"""
import numpy as np

from . import _formulas as _F
from ._accel import njit

sigmoid = njit(_F.sigmoid)
bv = njit(_F.bv)
bv_prime = njit(_F.bv_prime)
f_elec = njit(_F.f_elec)
f_elec_dy = njit(_F.f_elec_dy)
n_salt = njit(_F.n_salt)
n_salt_dy = njit(_F.n_salt_dy)
ngam = njit(_F.ngam)
ngam_dy = njit(_F.ngam_dy)
crowd = njit(_F.crowd)
crowd_dy = njit(_F.crowd_dy)

_G2 = 0.5773502691896257  # 1/sqrt(3)


@njit
def _reaction(u, ints, sc, eint, p, out):
    """Reaction rate at electrode node p and its partials.

    out = [R, dR/du1_surface, dR/dphi_S, dR/dy_E, dR/dphi_E]; returns False
    when y_E leaves (0, 0.5).
    """
    nm = ints[1]
    o2 = ints[4]
    o3 = ints[5]
    o4 = ints[6]
    m = eint[p, 0]
    e = eint[p, 1]
    gam = sc[12 + e]
    lrate = sc[2]
    alpha = sc[4]
    kappa = sc[5]
    us = u[p * nm]
    ye = u[o3 + m]
    if not (ye > 0.0 and ye < 0.5):
        return False
    ys = sigmoid(us)
    lam = u[o2 + p] - u[o4 + m] + us + gam * (2.0 * ys - 1.0) - f_elec(ye, kappa)
    gp = lrate * bv_prime(lam, alpha)
    out[0] = lrate * bv(lam, alpha)
    out[1] = gp * (1.0 + 2.0 * gam * ys * (1.0 - ys))
    out[2] = gp
    out[3] = -gp * f_elec_dy(ye, kappa)
    out[4] = -gp
    return True


@njit
def _edge_coeff(ya, yb, c0, kappa, scale, which, out):
    """Two-point Gauss average over a macro element.

    which = 0 integrates n_tot * Gamma_E, which = 1 integrates n_salt.
    out = [value, d/dya, d/dyb], each multiplied by scale.
    """
    v = 0.0
    da = 0.0
    db = 0.0
    for s in range(2):
        x = -_G2 if s == 0 else _G2
        na = 0.5 * (1.0 - x)
        nb = 0.5 * (1.0 + x)
        yg = na * ya + nb * yb
        if which == 0:
            f = ngam(yg, c0, kappa)
            fp = ngam_dy(yg, c0, kappa)
        else:
            f = n_salt(yg, c0, kappa)
            fp = n_salt_dy(yg, c0, kappa)
        v += f
        da += fp * na
        db += fp * nb
    out[0] = scale * v
    out[1] = scale * da
    out[2] = scale * db


@njit
def eval_rows(u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt, elt, mg, mmass,
              res, cols, vals):
    """Evaluate residual entries (and Jacobian rows) for ``rows``.

    Returns 1 on success and 0 on an evaluability failure.
    """
    nm = ints[1]
    o2 = ints[4]
    o3 = ints[5]
    o4 = ints[6]
    ch = sc[0]
    dt = sc[1]
    dref = sc[3]
    kappa = sc[5]
    c0 = sc[6]
    tcat = sc[7]
    d_e = sc[8]
    lam_e = sc[9]
    s_e = sc[10]
    hm = sc[11]
    rv = np.zeros(5)
    ev = np.zeros(3)
    ev2 = np.zeros(3)
    for i in range(rows.shape[0]):
        r = rows[i]
        if want_jac:
            for s in range(8):
                cols[i, s] = -1
                vals[i, s] = 0.0
        if r < o2:
            # micro diffusion row
            p = r // nm
            k = r - p * nm
            e = eint[p, 1]
            gam = sc[12 + e]
            rt = sc[14 + e]
            cm = rt * rt * ch / dt
            sk = dref / (hm * hm)
            yk = sigmoid(u[r])
            ypk = sigmoid(up[r])
            val = 0.0
            dk = 0.0
            if k > 0:
                j = k - 1
                yo = sigmoid(u[r - 1])
                ypo = sigmoid(up[r - 1])
                a = 0.0
                dao = 0.0
                dak = 0.0
                for g in range(3):
                    wq = mg[j, g, 0]
                    n0 = mg[j, g, 1]
                    n1 = mg[j, g, 2]
                    yg = n0 * yo + n1 * yk
                    a += wq * crowd(yg, gam)
                    cd = wq * crowd_dy(yg, gam)
                    dao += cd * n0
                    dak += cd * n1
                val += cm * (mmass[j, 1] * (yo - ypo) + mmass[j, 2] * (yk - ypk)) + sk * a * (yk - yo)
                if want_jac:
                    dk += cm * mmass[j, 2] + sk * (a + dak * (yk - yo))
                    cols[i, 1] = r - 1
                    vals[i, 1] = (cm * mmass[j, 1] + sk * (-a + dao * (yk - yo))) * yo * (1.0 - yo)
            if k < nm - 1:
                j = k
                yo = sigmoid(u[r + 1])
                ypo = sigmoid(up[r + 1])
                a = 0.0
                dao = 0.0
                dak = 0.0
                for g in range(3):
                    wq = mg[j, g, 0]
                    n0 = mg[j, g, 1]
                    n1 = mg[j, g, 2]
                    yg = n0 * yk + n1 * yo
                    a += wq * crowd(yg, gam)
                    cd = wq * crowd_dy(yg, gam)
                    dak += cd * n0
                    dao += cd * n1
                val += cm * (mmass[j, 0] * (yk - ypk) + mmass[j, 1] * (yo - ypo)) + sk * a * (yk - yo)
                if want_jac:
                    dk += cm * mmass[j, 0] + sk * (a + dak * (yk - yo))
                    cols[i, 2] = r + 1
                    vals[i, 2] = (cm * mmass[j, 1] + sk * (-a + dao * (yk - yo))) * yo * (1.0 - yo)
            if want_jac:
                cols[i, 0] = r
                vals[i, 0] = dk * yk * (1.0 - yk)
            if k == 0:
                if not _reaction(u, ints, sc, eint, p, rv):
                    return 0
                m = eint[p, 0]
                val += rt * rv[0]
                if want_jac:
                    vals[i, 0] += rt * rv[1]
                    cols[i, 3] = o2 + p
                    vals[i, 3] = rt * rv[2]
                    cols[i, 4] = o3 + m
                    vals[i, 4] = rt * rv[3]
                    cols[i, 5] = o4 + m
                    vals[i, 5] = rt * rv[4]
            res[i] = val
        elif r < o3:
            # solid charge row
            p = r - o2
            if eint[p, 4] == 1:
                c = eflt[p, 3] / eflt[p, 1]
                res[i] = c * u[r]
                if want_jac:
                    cols[i, 0] = r
                    vals[i, 0] = c
                continue
            val = 0.0
            dk = 0.0
            q = eint[p, 2]
            if q >= 0:
                c = eflt[p, 2] / eflt[p, 0]
                val += c * (u[r] - u[o2 + q])
                dk += c
                if want_jac:
                    cols[i, 1] = o2 + q
                    vals[i, 1] = -c
            q = eint[p, 3]
            if q >= 0:
                c = eflt[p, 3] / eflt[p, 1]
                val += c * (u[r] - u[o2 + q])
                dk += c
                if want_jac:
                    cols[i, 2] = o2 + q
                    vals[i, 2] = -c
            if not _reaction(u, ints, sc, eint, p, rv):
                return 0
            w = eflt[p, 4]
            m = eint[p, 0]
            val += w * rv[0]
            res[i] = val
            if want_jac:
                cols[i, 0] = r
                vals[i, 0] = dk + w * rv[2]
                cols[i, 3] = p * nm
                vals[i, 3] = w * rv[1]
                cols[i, 4] = o3 + m
                vals[i, 4] = w * rv[3]
                cols[i, 5] = o4 + m
                vals[i, 5] = w * rv[4]
        elif r < o4:
            # electrolyte mass row
            m = r - o3
            ym = u[r]
            if not (ym > 0.0 and ym < 0.5):
                return 0
            cmass = mflt[m, 0] * ch / dt
            val = cmass * (n_salt(ym, c0, kappa) - n_salt(up[r], c0, kappa))
            dk = cmass * n_salt_dy(ym, c0, kappa)
            for side in range(2):
                q = mint[m, side]
                if q < 0:
                    continue
                el = mint[m, 2 + side]
                yq = u[o3 + q]
                if not (yq > 0.0 and yq < 0.5):
                    return 0
                scale = elt[el, 1] * d_e / (2.0 * elt[el, 0])
                if side == 0:
                    _edge_coeff(yq, ym, c0, kappa, scale, 0, ev)
                    kq = ev[1]
                    km = ev[2]
                else:
                    _edge_coeff(ym, yq, c0, kappa, scale, 0, ev)
                    km = ev[1]
                    kq = ev[2]
                val += ev[0] * (ym - yq)
                if want_jac:
                    dk += ev[0] + km * (ym - yq)
                    cols[i, 1 + side] = o3 + q
                    vals[i, 1 + side] = -ev[0] + kq * (ym - yq)
            p = mint[m, 4]
            if want_jac:
                cols[i, 0] = r
                vals[i, 0] = dk
            if p >= 0:
                if not _reaction(u, ints, sc, eint, p, rv):
                    return 0
                c = -sc[16 + eint[p, 1]] * (1.0 - tcat) * eflt[p, 4]
                val += c * rv[0]
                if want_jac:
                    vals[i, 0] += c * rv[3]
                    cols[i, 3] = p * nm
                    vals[i, 3] = c * rv[1]
                    cols[i, 4] = o2 + p
                    vals[i, 4] = c * rv[2]
                    cols[i, 5] = o4 + m
                    vals[i, 5] = c * rv[4]
            res[i] = val
        else:
            # electrolyte charge row
            m = r - o4
            ym = u[o3 + m]
            if not (ym > 0.0 and ym < 0.5):
                return 0
            val = 0.0
            dphi = 0.0
            dy = 0.0
            for side in range(2):
                q = mint[m, side]
                if q < 0:
                    continue
                el = mint[m, 2 + side]
                yq = u[o3 + q]
                if not (yq > 0.0 and yq < 0.5):
                    return 0
                base = elt[el, 1] / (2.0 * elt[el, 0])
                if side == 0:
                    _edge_coeff(yq, ym, c0, kappa, base * s_e, 0, ev)
                    _edge_coeff(yq, ym, c0, kappa, base * lam_e, 1, ev2)
                    sq = ev[1]
                    sm = ev[2]
                    gq = ev2[1]
                    gm = ev2[2]
                else:
                    _edge_coeff(ym, yq, c0, kappa, base * s_e, 0, ev)
                    _edge_coeff(ym, yq, c0, kappa, base * lam_e, 1, ev2)
                    sm = ev[1]
                    sq = ev[2]
                    gm = ev2[1]
                    gq = ev2[2]
                dyv = ym - yq
                dpv = u[r] - u[o4 + q]
                val += ev[0] * dyv + ev2[0] * dpv
                if want_jac:
                    dphi += ev2[0]
                    dy += ev[0] + sm * dyv + gm * dpv
                    cols[i, 1 + side] = o4 + q
                    vals[i, 1 + side] = -ev2[0]
                    cols[i, 4 + side] = o3 + q
                    vals[i, 4 + side] = -ev[0] + sq * dyv + gq * dpv
            if want_jac:
                cols[i, 0] = r
                vals[i, 0] = dphi
                cols[i, 3] = o3 + m
                vals[i, 3] = dy
            p = mint[m, 4]
            if p >= 0:
                if not _reaction(u, ints, sc, eint, p, rv):
                    return 0
                c = -sc[16 + eint[p, 1]] * eflt[p, 4]
                val += c * rv[0]
                if want_jac:
                    vals[i, 0] += c * rv[4]
                    vals[i, 3] += c * rv[3]
                    cols[i, 6] = p * nm
                    vals[i, 6] = c * rv[1]
                    cols[i, 7] = o2 + p
                    vals[i, 7] = c * rv[2]
            res[i] = val
        if not np.isfinite(res[i]):
            return 0
    return 1


@njit
def reduced_system(a, vcl, clr, closure, u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt,
                   elt, mg, mmass, W, blocks, VS, vsr, rhs, res, cols, vals, JV, r_out, J_out):
    """Lift ``a`` onto the stencil closure, evaluate the point rows and project.

    The bases are block diagonal by component: closure entry ``i`` only
    involves coefficients ``clr[i, 0]:clr[i, 1]``, stencil slot ``(p, s)``
    only ``vsr[p, s, 0]:vsr[p, s, 1]``, and reduced row block ``b`` couples
    to the point rows ``blocks[b, 2]:blocks[b, 3]``. Writes the reduced
    residual to ``r_out`` and, if requested, the reduced Jacobian to
    ``J_out``. Returns 0 on an evaluability failure.
    """
    nr = a.shape[0]
    for i in range(closure.shape[0]):
        s = 0.0
        for j in range(clr[i, 0], clr[i, 1]):
            s += vcl[i, j] * a[j]
        u[closure[i]] = s
    ok = eval_rows(u, up, rows, want_jac, ints, sc, eint, eflt, mint, mflt, elt, mg, mmass,
                   res, cols, vals)
    if ok == 0:
        return 0
    for b in range(blocks.shape[0]):
        for q in range(blocks[b, 0], blocks[b, 1]):
            s = 0.0
            for p in range(blocks[b, 2], blocks[b, 3]):
                s += W[q, p] * res[p]
            r_out[q] = s + sc[0] * rhs[q]
    if want_jac:
        npt = rows.shape[0]
        for p in range(npt):
            for j in range(nr):
                JV[p, j] = 0.0
            for s in range(8):
                v = vals[p, s]
                if v != 0.0:
                    for j in range(vsr[p, s, 0], vsr[p, s, 1]):
                        JV[p, j] += v * VS[p, s, j]
        for b in range(blocks.shape[0]):
            q0, q1, p0, p1 = blocks[b, 0], blocks[b, 1], blocks[b, 2], blocks[b, 3]
            J_out[q0:q1, :] = np.dot(np.ascontiguousarray(W[q0:q1, p0:p1]),
                                     np.ascontiguousarray(JV[p0:p1, :]))
    return 1


@njit
def reduced_newton(a_prev, vcl, clr, closure, u, up, rows, ints, sc, eint, eflt, mint, mflt, elt,
                   mg, mmass, W, blocks, VS, vsr, rhs, res, cols, vals, JV, r, J, a_out, rtol,
                   max_iter, max_bisections, res_atol):
    """Undamped reduced Newton for one time step, started from ``a_prev``.

    Returns (status, iterations, rows evaluated). Status 1 means converged;
    0 initial guess not evaluable; -1 singular Jacobian; -2 no convergence;
    -3 step not evaluable after all bisections; -4 non-finite residual.
    """
    nr = a_prev.shape[0]
    for i in range(closure.shape[0]):
        s = 0.0
        for j in range(clr[i, 0], clr[i, 1]):
            s += vcl[i, j] * a_prev[j]
        up[closure[i]] = s
    a = a_prev.copy()
    trial = np.empty(nr)
    evals = 1
    if reduced_system(a, vcl, clr, closure, u, up, rows, True, ints, sc, eint, eflt, mint, mflt,
                      elt, mg, mmass, W, blocks, VS, vsr, rhs, res, cols, vals, JV, r, J) == 0:
        return 0, 0, evals * rows.shape[0]
    for it in range(max_iter + 1):
        if np.sqrt(np.sum(r * r)) <= res_atol:
            a_out[:] = a
            return 1, it, evals * rows.shape[0]
        if it == max_iter:
            break
        try:
            da = np.linalg.solve(J, -r)
        except Exception:
            return -1, it, evals * rows.shape[0]
        step = 1.0
        ok = 0
        for _ in range(max_bisections + 1):
            for j in range(nr):
                trial[j] = a[j] + step * da[j]
            evals += 1
            ok = reduced_system(trial, vcl, clr, closure, u, up, rows, True, ints, sc, eint, eflt,
                                mint, mflt, elt, mg, mmass, W, blocks, VS, vsr, rhs, res, cols,
                                vals, JV, r, J)
            if ok == 1:
                break
            step *= 0.5
        if ok == 0:
            return -3, it, evals * rows.shape[0]
        a[:] = trial
        if not np.all(np.isfinite(r)):
            return -4, it + 1, evals * rows.shape[0]
        if step == 1.0 and np.sqrt(np.sum(da * da)) <= rtol * np.sqrt(np.sum(a * a)):
            a_out[:] = a
            return 1, it + 1, evals * rows.shape[0]
    return -2, max_iter, evals * rows.shape[0]
