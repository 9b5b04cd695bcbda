"""Jitted matrix-vector kernels: dense rows, scalar CSR, and block-row SIMD.

The block kernel is the performance-critical path. LLVM's loop and SLP
vectorizers both fail on the natural Python/numba formulation (the loop
vectorizer emits cross-block gathers, the SLP pass leaves scalar fmadds),
so for block widths that are a multiple of 8 the inner row loop is emitted
directly as LLVM IR: one 8-lane accumulator phi per 8 columns of the block,
contiguous vector loads from the block storage and from the aligned slice
of x, and a fused multiply-add per lane group. A plain numba kernel covers
every other width and doubles as a cross-check in the tests.
"""

from __future__ import annotations

import numba
import numpy as np
from llvmlite import ir
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

_F32 = ir.FloatType()
_I32 = ir.IntType(32)
_I64 = ir.IntType(64)
_VEC8 = ir.VectorType(_F32, 8)


@numba.njit(fastmath=True, cache=True)
def dense_gemv_kernel(a, x, out):
    """Row-major dense product: out[i] = sum_j a[i, j] * x[j]."""
    rows, cols = a.shape
    for i in range(rows):
        acc = np.float32(0.0)
        for j in range(cols):
            acc += a[i, j] * x[j]
        out[i] = acc
    return out


@numba.njit(fastmath=True, cache=True)
def saxpy_kernel(alpha, x, y, out):
    for i in range(x.shape[0]):
        out[i] = alpha * x[i] + y[i]
    return out


@numba.njit(cache=True)
def csr_gemv_kernel(row_offsets, col_indices, values, x, out):
    """Scalar compressed-row product; the per-element gather is the point."""
    rows = row_offsets.shape[0] - 1
    for i in range(rows):
        acc = np.float32(0.0)
        for p in range(row_offsets[i], row_offsets[i + 1]):
            acc += values[p] * x[col_indices[p]]
        out[i] = acc
    return out


@numba.njit(fastmath=True, cache=True)
def bsr_gemv_generic_kernel(row_offsets, block_cols, block_values, width, x, out):
    """Reference block-row product for any block width."""
    rows = row_offsets.shape[0] - 1
    for i in range(rows):
        acc = np.float32(0.0)
        for p in range(row_offsets[i], row_offsets[i + 1]):
            base = np.int64(block_cols[p]) * width
            voff = p * width
            for k in range(width):
                acc += block_values[voff + k] * x[base + k]
        out[i] = acc
    return out


def _make_block_row_dot(width: int):
    """Build an intrinsic computing one output row of the block product.

    Emits the whole `for p in [start, end)` loop as IR so the `width // 8`
    accumulators stay in vector registers across blocks.
    """
    nv = width // 8

    @intrinsic
    def block_row_dot(typingctx, bv, x, bcols, start, end):
        sig = types.float32(bv, x, bcols, start, end)

        def codegen(context, builder, signature, args):
            bvval, xval, bcval, startval, endval = args
            bvty, xty, bcty = signature.args[:3]
            bvp = context.make_array(bvty)(context, builder, bvval).data
            xp = context.make_array(xty)(context, builder, xval).data
            bcp = context.make_array(bcty)(context, builder, bcval).data

            fnty = ir.FunctionType(_VEC8, [_VEC8, _VEC8, _VEC8])
            fmuladd = cgutils.get_or_insert_function(
                builder.module, fnty, "llvm.fmuladd.v8f32")

            fn = builder.function
            entry_bb = builder.block
            loop_bb = fn.append_basic_block("blockrow.loop")
            done_bb = fn.append_basic_block("blockrow.done")

            zerovec = ir.Constant(_VEC8, [0.0] * 8)
            cwidth = ir.Constant(_I64, width)

            nonempty = builder.icmp_signed("<", startval, endval)
            builder.cbranch(nonempty, loop_bb, done_bb)

            builder.position_at_end(loop_bb)
            p = builder.phi(_I64, "p")
            p.add_incoming(startval, entry_bb)
            accs = []
            for k in range(nv):
                acc = builder.phi(_VEC8, f"acc{k}")
                acc.add_incoming(zerovec, entry_bb)
                accs.append(acc)

            bcol = builder.load(builder.gep(bcp, [p]))
            base = builder.mul(builder.sext(bcol, _I64), cwidth)
            voff = builder.mul(p, cwidth)

            def load8(ptr, idx):
                q = builder.gep(ptr, [idx])
                return builder.load(builder.bitcast(q, _VEC8.as_pointer()),
                                    align=4)

            nexts = []
            for k in range(nv):
                off = ir.Constant(_I64, 8 * k)
                bvvec = load8(bvp, builder.add(voff, off))
                xvec = load8(xp, builder.add(base, off))
                nexts.append(builder.call(fmuladd, [bvvec, xvec, accs[k]]))

            pnext = builder.add(p, ir.Constant(_I64, 1))
            p.add_incoming(pnext, loop_bb)
            for acc, nxt in zip(accs, nexts):
                acc.add_incoming(nxt, loop_bb)
            again = builder.icmp_signed("<", pnext, endval)
            builder.cbranch(again, loop_bb, done_bb)

            builder.position_at_end(done_bb)
            finals = []
            for k in range(nv):
                f = builder.phi(_VEC8)
                f.add_incoming(zerovec, entry_bb)
                f.add_incoming(nexts[k], loop_bb)
                finals.append(f)
            vsum = finals[0]
            for k in range(1, nv):
                vsum = builder.fadd(vsum, finals[k], flags=("fast",))
            lanes = [builder.extract_element(vsum, ir.Constant(_I32, k))
                     for k in range(8)]
            while len(lanes) > 1:
                lanes = [builder.fadd(lanes[k], lanes[k + 1], flags=("fast",))
                         for k in range(0, len(lanes), 2)]
            return lanes[0]

        return sig, codegen

    return block_row_dot


def _make_simd_bsr_gemv(width: int):
    row_dot = _make_block_row_dot(width)

    @numba.njit(fastmath=True)
    def kernel(row_offsets, block_cols, block_values, x, out):
        rows = row_offsets.shape[0] - 1
        for i in range(rows):
            out[i] = row_dot(block_values, x, block_cols,
                             row_offsets[i], row_offsets[i + 1])
        return out

    return kernel


_SIMD_BSR_CACHE: dict[int, object] = {}


def has_simd_width(width: int) -> bool:
    """True when the explicit vector path supports this block width."""
    return width >= 8 and width % 8 == 0


def simd_bsr_gemv(width: int):
    """Jitted block-row gemv specialized for `width` (multiple of 8)."""
    if not has_simd_width(width):
        raise ValueError(f"no SIMD block kernel for width {width}")
    kernel = _SIMD_BSR_CACHE.get(width)
    if kernel is None:
        kernel = _make_simd_bsr_gemv(width)
        _SIMD_BSR_CACHE[width] = kernel
    return kernel
