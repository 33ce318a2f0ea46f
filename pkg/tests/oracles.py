"""Independent reference implementations used to verify the package.

Everything here is deliberately written from first principles (nested
loops, BFS, explicit algebra) and never calls back into the code paths it
checks.
"""

import numpy as np
import torch


# --- dense convolution by explicit loops ------------------------------------

def conv2d_loop(x, weight, bias=None, dilation=1):
    """Same-padded 2D convolution computed with nested scalar loops."""
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    out = np.zeros((n, o, h, w), dtype=np.float64)
    for ni in range(n):
        for oi in range(o):
            for yy in range(h):
                for xx in range(w):
                    acc = 0.0 if bias is None else float(bias[oi])
                    for ci in range(c):
                        for ky in range(kh):
                            for kx in range(kw):
                                iy = yy + dilation * (ky - (kh - 1) // 2)
                                ix = xx + dilation * (kx - (kw - 1) // 2)
                                if 0 <= iy < h and 0 <= ix < w:
                                    acc += float(x[ni, ci, iy, ix]) * float(weight[oi, ci, ky, kx])
                    out[ni, oi, yy, xx] = acc
    return out


def avg_pool2_loop(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2), dtype=np.float64)
    for yy in range(h // 2):
        for xx in range(w // 2):
            out[:, :, yy, xx] = x[:, :, 2 * yy: 2 * yy + 2, 2 * xx: 2 * xx + 2].mean(axis=(2, 3))
    return out


def upsample_nearest2_loop(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w), dtype=np.float64)
    for yy in range(2 * h):
        for xx in range(2 * w):
            out[:, :, yy, xx] = x[:, :, yy // 2, xx // 2]
    return out


def octconv_loop(high, low, layer):
    """Materialize all four octave paths with the loop convolution."""
    def wb(conv):
        if conv is None:
            return None, None
        w = conv.weight.detach().numpy().astype(np.float64)
        b = None if conv.bias is None else conv.bias.detach().numpy().astype(np.float64)
        return w, b

    d = layer.conv_hh.dilation[0]
    w_hh, b_hh = wb(layer.conv_hh)
    y_high = conv2d_loop(high, w_hh, b_hh, d)
    if layer.conv_lh is not None:
        w_lh, b_lh = wb(layer.conv_lh)
        y_high = y_high + upsample_nearest2_loop(conv2d_loop(low, w_lh, b_lh, d))
    y_low = None
    if layer.conv_hl is not None:
        w_hl, b_hl = wb(layer.conv_hl)
        y_low = conv2d_loop(avg_pool2_loop(high), w_hl, b_hl, d)
        if layer.conv_ll is not None:
            w_ll, b_ll = wb(layer.conv_ll)
            y_low = y_low + conv2d_loop(low, w_ll, b_ll, d)
    return y_high, y_low


# --- finite differences -------------------------------------------------------

def finite_diff_grads(fn, tensors, eps=1e-4):
    """Central-difference gradients of the scalar fn() w.r.t. each tensor."""
    grads = []
    with torch.no_grad():
        for t in tensors:
            g = torch.zeros_like(t)
            flat, gf = t.view(-1), g.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                f_plus = float(fn())
                flat[i] = orig - eps
                f_minus = float(fn())
                flat[i] = orig
                gf[i] = (f_plus - f_minus) / (2.0 * eps)
            grads.append(g)
    return grads


def max_relative_error(analytical, numerical):
    a = torch.cat([g.reshape(-1) for g in analytical])
    f = torch.cat([g.reshape(-1) for g in numerical])
    scale = max(float(f.abs().max()), 1e-8)
    return float((a - f).abs().max()) / scale


def grad_check(build_scalar, params, eps=1e-4, tol=1e-3):
    """Autograd gradients vs central finite differences; returns max rel error."""
    for p in params:
        if p.grad is not None:
            p.grad = None
    build_scalar().backward()
    analytical = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                  for p in params]
    numerical = finite_diff_grads(lambda: build_scalar().detach(), [p.data for p in params], eps)
    return max_relative_error(analytical, numerical)


# --- flood fill and boundaries -----------------------------------------------

N8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
N4 = [(-1, 0), (1, 0), (0, -1), (0, 1)]


def flood_components(mask, neighbours=N8):
    """Connected components by BFS flood fill; returns list of bool masks
    ordered by their first pixel in raster order."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                comp = np.zeros_like(mask)
                queue = [(r, c)]
                seen[r, c] = comp[r, c] = True
                while queue:
                    cr, cc = queue.pop()
                    for dr, dc in neighbours:
                        nr, nc = cr + dr, cc + dc
                        if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = comp[nr, nc] = True
                            queue.append((nr, nc))
                comps.append(comp)
    return comps


def fill_holes_bfs(comp):
    """Fill interior holes: background BFS (4-connected) from the border."""
    comp = np.asarray(comp, dtype=bool)
    h, w = comp.shape
    outside = np.zeros_like(comp)
    queue = [(r, c) for r in range(h) for c in (0, w - 1) if not comp[r, c]]
    queue += [(r, c) for c in range(w) for r in (0, h - 1) if not comp[r, c]]
    for r, c in queue:
        outside[r, c] = True
    while queue:
        cr, cc = queue.pop()
        for dr, dc in N4:
            nr, nc = cr + dr, cc + dc
            if 0 <= nr < h and 0 <= nc < w and not comp[nr, nc] and not outside[nr, nc]:
                outside[nr, nc] = True
                queue.append((nr, nc))
    return ~outside


def boundary_pixels_bf(region):
    """Pixels of the region with a 4-neighbour outside it or off the image."""
    region = np.asarray(region, dtype=bool)
    h, w = region.shape
    out = np.zeros_like(region)
    for r in range(h):
        for c in range(w):
            if not region[r, c]:
                continue
            for dr, dc in N4:
                nr, nc = r + dr, c + dc
                if not (0 <= nr < h and 0 <= nc < w) or not region[nr, nc]:
                    out[r, c] = True
                    break
    return out


# --- instance matching ---------------------------------------------------------

def greedy_match_by_sorted_pairs(pred_masks, gt_masks):
    """Greedy highest-IoU matching restated: sort every (pred, gt) pair by
    IoU descending and accept pairs whose ends are still free."""
    pairs = []
    for i, p in enumerate(pred_masks):
        for j, g in enumerate(gt_masks):
            union = np.logical_or(p, g).sum()
            iou = np.logical_and(p, g).sum() / union if union else 0.0
            if iou > 0:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    taken_p, taken_g, out = set(), set(), []
    for iou, i, j in pairs:
        if i not in taken_p and j not in taken_g:
            out.append((i, j))
            taken_p.add(i)
            taken_g.add(j)
    return out


def pixel_rates_from_matching(pred_masks, gt_masks, pairs):
    tp = fp = fn = 0
    matched_p = {i for i, _ in pairs}
    matched_g = {j for _, j in pairs}
    for i, j in pairs:
        tp += int(np.logical_and(pred_masks[i], gt_masks[j]).sum())
        fp += int(np.logical_and(pred_masks[i], ~gt_masks[j]).sum())
        fn += int(np.logical_and(~pred_masks[i], gt_masks[j]).sum())
    fp += int(sum(m.sum() for i, m in enumerate(pred_masks) if i not in matched_p))
    fn += int(sum(m.sum() for j, m in enumerate(gt_masks) if j not in matched_g))
    return tp, fp, fn


# --- dense RSU cost reference ---------------------------------------------------

def rsu_macs_reference(height, cin, mid, cout, h, w):
    """Straight-line conv MAC count of the dense residual U-block."""
    total = 9 * cin * cout * h * w                       # input conv
    res = [(h // 2 ** min(i, height - 2), w // 2 ** min(i, height - 2))
           for i in range(height)]
    total += 9 * cout * mid * res[0][0] * res[0][1]      # enc0
    for i in range(1, height):                            # enc1.. + dilated top
        total += 9 * mid * mid * res[i][0] * res[i][1]
    for i in range(height - 2):                           # dec0..dec_{L-3}
        rh, rw = res[height - 2 - i]
        total += 9 * 2 * mid * mid * rh * rw
    total += 9 * 2 * mid * cout * h * w                   # final decoder conv
    return float(total)


def rsu4f_macs_reference(cin, mid, cout, h, w):
    total = 9 * cin * cout * h * w
    total += 9 * cout * mid * h * w
    total += 3 * 9 * mid * mid * h * w
    total += 2 * 9 * 2 * mid * mid * h * w
    total += 9 * 2 * mid * cout * h * w
    return float(total)
