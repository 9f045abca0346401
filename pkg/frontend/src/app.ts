// Wires the viewport loop, overlay, and inspection panel to the DOM.
// Rendering is skipped gracefully when a 2D context is unavailable (the
// request/panel behavior stays fully testable without pixels).

import { ApiClient, type ContourGrid, type Meta, type PointRec } from './api.js'
import { pickColormap, type Colormap } from './colormap.js'
import { OverlayController, hitTest } from './overlay.js'
import { drawGrid, drawLegend, drawPoints } from './render.js'
import {
    FULL_EXTENT,
    ViewportLoop,
    pan,
    zoomAround,
    type Bbox,
    type ViewportLoopOptions,
} from './viewport.js'

export interface AppElements {
    map: HTMLCanvasElement
    legend: HTMLCanvasElement
    banner: HTMLElement
    hover: HTMLElement
    panel: HTMLElement
    overlayToggle: HTMLInputElement
    methodSelect: HTMLSelectElement
    paramInput: HTMLInputElement
    resetButton: HTMLElement
}

export interface AppOptions {
    baseNw?: number
    debounceMs?: number
    setTimer?: ViewportLoopOptions['setTimer']
    clearTimer?: ViewportLoopOptions['clearTimer']
}

export class ExplorerApp {
    readonly viewport: ViewportLoop
    readonly overlay: OverlayController
    meta: Meta | null = null
    grid: ContourGrid | null = null
    points: PointRec[] = []
    private cmap: Colormap | null = null
    private bbox: Bbox = { ...FULL_EXTENT }

    constructor(
        private readonly api: ApiClient,
        private readonly el: AppElements,
        opts: AppOptions = {},
    ) {
        this.viewport = new ViewportLoop({
            fetchContour: (req) => this.api.contour(req),
            onGrid: (grid, bbox) => this.onGrid(grid, bbox),
            onSettled: (bbox) => this.overlay.viewportSettled(bbox),
            onError: () => this.showBanner('contour request failed; showing last map'),
            baseNw: opts.baseNw,
            debounceMs: opts.debounceMs,
            setTimer: opts.setTimer,
            clearTimer: opts.clearTimer,
        })
        this.overlay = new OverlayController({
            fetchPoints: (req) => this.api.points(req),
            onPoints: (pts) => {
                this.points = pts
                this.repaint()
            },
            onError: () => this.showBanner('point request failed'),
        })
        this.bindEvents()
    }

    async start(): Promise<void> {
        this.meta = await this.api.meta()
        this.cmap = pickColormap(this.meta.score_min, this.meta.score_max, this.meta.diverging)
        this.overlay.count = Math.min(this.overlay.count, this.meta.n)
        this.viewport.refresh()
    }

    private bindEvents(): void {
        const canvas = this.el.map
        canvas.addEventListener('wheel', (ev) => {
            ev.preventDefault()
            const rect = canvas.getBoundingClientRect()
            const fx = this.bbox.xmin + ((ev.clientX - rect.left) / rect.width) * (this.bbox.xmax - this.bbox.xmin)
            const fy = this.bbox.ymin + (1 - (ev.clientY - rect.top) / rect.height) * (this.bbox.ymax - this.bbox.ymin)
            const factor = (ev as WheelEvent).deltaY > 0 ? 1.25 : 0.8
            this.setBbox(zoomAround(this.bbox, fx, fy, factor))
        })

        let dragging: { x: number; y: number } | null = null
        canvas.addEventListener('mousedown', (ev) => {
            dragging = { x: ev.clientX, y: ev.clientY }
        })
        canvas.addEventListener('mousemove', (ev) => {
            if (dragging) {
                const rect = canvas.getBoundingClientRect()
                const dx = (-(ev.clientX - dragging.x) / rect.width) * (this.bbox.xmax - this.bbox.xmin)
                const dy = ((ev.clientY - dragging.y) / rect.height) * (this.bbox.ymax - this.bbox.ymin)
                dragging = { x: ev.clientX, y: ev.clientY }
                this.setBbox(pan(this.bbox, dx, dy))
            } else {
                this.onHover(ev)
            }
        })
        canvas.addEventListener('mouseup', () => {
            dragging = null
        })
        canvas.addEventListener('click', (ev) => void this.onClick(ev))

        this.el.overlayToggle.addEventListener('change', () => {
            this.overlay.setEnabled(this.el.overlayToggle.checked)
        })
        this.el.methodSelect.addEventListener('change', () => {
            this.overlay.setMethod(this.el.methodSelect.value as 'random' | 'poisson')
        })
        this.el.paramInput.addEventListener('change', () => {
            const v = Number(this.el.paramInput.value)
            if (this.overlay.method === 'random') this.overlay.setCount(v)
            else this.overlay.setRadius(v)
        })
        this.el.resetButton.addEventListener('click', () => this.setBbox({ ...FULL_EXTENT }))
    }

    setBbox(b: Bbox): void {
        this.bbox = { ...b }
        this.viewport.setBbox(b)
    }

    currentBbox(): Bbox {
        return { ...this.bbox }
    }

    private onGrid(grid: ContourGrid, bbox: Bbox): void {
        this.grid = grid
        this.bbox = { ...bbox }
        this.hideBanner()
        this.repaint()
    }

    private onHover(ev: MouseEvent): void {
        if (!this.points.length) return
        const rect = this.el.map.getBoundingClientRect()
        const hit = hitTest(
            this.points,
            this.bbox,
            rect.width,
            rect.height,
            ev.clientX - rect.left,
            ev.clientY - rect.top,
        )
        this.el.hover.textContent = hit ? `${hit.id}: ${hit.score.toPrecision(4)}` : ''
    }

    private async onClick(ev: MouseEvent): Promise<void> {
        if (!this.points.length) return
        const rect = this.el.map.getBoundingClientRect()
        const hit = hitTest(
            this.points,
            this.bbox,
            rect.width,
            rect.height,
            ev.clientX - rect.left,
            ev.clientY - rect.top,
        )
        if (!hit) return
        try {
            const detail = await this.api.point(hit.id)
            this.el.panel.innerHTML = ''
            const title = document.createElement('div')
            title.className = 'panel-id'
            title.textContent = detail.id
            const score = document.createElement('div')
            score.textContent = `score ${detail.score.toPrecision(5)}`
            const meta = document.createElement('div')
            meta.className = 'panel-meta'
            meta.textContent = detail.meta
            this.el.panel.append(title, score, meta)
        } catch {
            this.showBanner('point lookup failed')
        }
    }

    private repaint(): void {
        // Pixels are best effort: state and requests stay correct in
        // canvas-less environments (jsdom raises from getContext).
        try {
            const mapCtx = this.el.map.getContext?.('2d')
            if (!mapCtx || !this.cmap) return
            const w = this.el.map.width
            const h = this.el.map.height
            if (this.grid) drawGrid(mapCtx, this.grid, this.cmap, w, h)
            if (this.points.length) drawPoints(mapCtx, this.points, this.bbox, this.cmap, w, h)
            const legendCtx = this.el.legend.getContext?.('2d')
            if (legendCtx && this.meta) {
                drawLegend(legendCtx, this.cmap, this.meta.score_min, this.meta.score_max, this.el.legend.width, this.el.legend.height)
            }
        } catch {
            // rendering backend unavailable
        }
    }

    private showBanner(text: string): void {
        this.el.banner.textContent = text
        this.el.banner.style.display = 'block'
    }

    private hideBanner(): void {
        this.el.banner.style.display = 'none'
    }
}
