// Sequential ramp for plain scores, diverging ramp (centered at zero) for
// score-difference datasets.

export type Rgb = [number, number, number]

const SEQ_STOPS: Array<[number, Rgb]> = [
    [0.0, [68, 1, 84]],
    [0.25, [59, 82, 139]],
    [0.5, [33, 145, 140]],
    [0.75, [94, 201, 98]],
    [1.0, [253, 231, 37]],
]

const DIV_STOPS: Array<[number, Rgb]> = [
    [0.0, [5, 48, 97]],
    [0.25, [116, 173, 209]],
    [0.5, [247, 247, 247]],
    [0.75, [244, 165, 130]],
    [1.0, [165, 0, 38]],
]

function interpolate(stops: Array<[number, Rgb]>, t: number): Rgb {
    const x = Math.min(1, Math.max(0, t))
    for (let i = 1; i < stops.length; i++) {
        const [t1, c1] = stops[i]
        const [t0, c0] = stops[i - 1]
        if (x <= t1) {
            const f = t1 === t0 ? 0 : (x - t0) / (t1 - t0)
            return [
                Math.round(c0[0] + f * (c1[0] - c0[0])),
                Math.round(c0[1] + f * (c1[1] - c0[1])),
                Math.round(c0[2] + f * (c1[2] - c0[2])),
            ]
        }
    }
    return stops[stops.length - 1][1]
}

export interface Colormap {
    rgb(value: number): Rgb
    css(value: number): string
}

/** Sequential map over [lo, hi]. */
export function sequential(lo: number, hi: number): Colormap {
    const span = hi - lo
    const scale = (v: number) => (span <= 0 ? 0.5 : (v - lo) / span)
    return {
        rgb: (v) => interpolate(SEQ_STOPS, scale(v)),
        css(v) {
            const [r, g, b] = this.rgb(v)
            return `rgb(${r},${g},${b})`
        },
    }
}

/** Diverging map symmetric about zero; limit = max(|lo|, |hi|). */
export function diverging(lo: number, hi: number): Colormap {
    const limit = Math.max(Math.abs(lo), Math.abs(hi), 1e-12)
    return {
        rgb: (v) => interpolate(DIV_STOPS, 0.5 + v / (2 * limit)),
        css(v) {
            const [r, g, b] = this.rgb(v)
            return `rgb(${r},${g},${b})`
        },
    }
}

export function pickColormap(scoreMin: number, scoreMax: number, divergingFlag: boolean): Colormap {
    return divergingFlag ? diverging(scoreMin, scoreMax) : sequential(scoreMin, scoreMax)
}
