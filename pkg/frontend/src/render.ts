// Canvas rendering: filled grid cells (nearest-cell fill, masked cells
// transparent), point overlay dots, and a gradient legend. Every painted
// value comes from a server response; nothing is interpolated client-side
// beyond assigning each pixel its covering cell.

import type { ContourGrid, PointRec } from './api.js'
import type { Colormap } from './colormap.js'
import type { Bbox } from './viewport.js'

type Ctx2d = CanvasRenderingContext2D

export function drawGrid(ctx: Ctx2d, grid: ContourGrid, cmap: Colormap, w: number, h: number): void {
    ctx.clearRect(0, 0, w, h)
    const cellW = w / grid.nw
    const cellH = h / grid.nh
    for (let j = 0; j < grid.nh; j++) {
        for (let i = 0; i < grid.nw; i++) {
            const k = j * grid.nw + i
            if (!grid.mask[k]) continue
            ctx.fillStyle = cmap.css(grid.values[k])
            // row j counts upward from ymin; canvas rows run downward
            const x = i * cellW
            const y = h - (j + 1) * cellH
            ctx.fillRect(x, y, Math.ceil(cellW), Math.ceil(cellH))
        }
    }
}

export function drawPoints(
    ctx: Ctx2d,
    points: PointRec[],
    bbox: Bbox,
    cmap: Colormap,
    w: number,
    h: number,
): void {
    for (const p of points) {
        const cx = ((p.x - bbox.xmin) / (bbox.xmax - bbox.xmin)) * w
        const cy = (1 - (p.y - bbox.ymin) / (bbox.ymax - bbox.ymin)) * h
        if (cx < -4 || cx > w + 4 || cy < -4 || cy > h + 4) continue
        ctx.beginPath()
        ctx.arc(cx, cy, 3, 0, 2 * Math.PI)
        ctx.fillStyle = cmap.css(p.score)
        ctx.fill()
        ctx.strokeStyle = 'rgba(0,0,0,0.6)'
        ctx.lineWidth = 0.75
        ctx.stroke()
    }
}

export function drawLegend(
    ctx: Ctx2d,
    cmap: Colormap,
    lo: number,
    hi: number,
    w: number,
    h: number,
): void {
    ctx.clearRect(0, 0, w, h)
    const barH = h - 16
    for (let y = 0; y < barH; y++) {
        const v = hi - ((hi - lo) * y) / barH
        ctx.fillStyle = cmap.css(v)
        ctx.fillRect(0, y, 14, 1)
    }
    ctx.fillStyle = '#222'
    ctx.font = '10px sans-serif'
    ctx.fillText(hi.toPrecision(3), 18, 10)
    ctx.fillText(lo.toPrecision(3), 18, barH)
}
