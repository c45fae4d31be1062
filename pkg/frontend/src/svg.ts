/** Small SVG chart toolkit: linear/log scales, axes with ticks, and the
 * handful of marks the report figures need.  Everything is plain string
 * assembly so the output is deterministic and dependency-free.
 */

export const WIDTH = 640
export const HEIGHT = 420
export const MARGIN = { top: 36, right: 24, bottom: 52, left: 72 }

export interface Scale {
  (v: number): number
  domain: [number, number]
  range: [number, number]
  log: boolean
}

export function linearScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain
  const [r0, r1] = range
  const span = d1 - d0 || 1
  const fn = ((v: number) => r0 + ((v - d0) / span) * (r1 - r0)) as Scale
  fn.domain = domain
  fn.range = range
  fn.log = false
  return fn
}

export function logScale(domain: [number, number], range: [number, number]): Scale {
  const [d0, d1] = domain
  if (d0 <= 0 || d1 <= 0) {
    throw new Error(`log scale needs a positive domain, got [${d0}, ${d1}]`)
  }
  const l0 = Math.log10(d0)
  const span = Math.log10(d1) - l0 || 1
  const [r0, r1] = range
  const fn = ((v: number) => r0 + ((Math.log10(v) - l0) / span) * (r1 - r0)) as Scale
  fn.domain = domain
  fn.range = range
  fn.log = true
  return fn
}

export function extent(values: number[], padFraction = 0.05): [number, number] {
  const finite = values.filter(Number.isFinite)
  if (finite.length === 0) throw new Error('no finite values to scale')
  let lo = Math.min(...finite)
  let hi = Math.max(...finite)
  // spans near the floating-point resolution of the endpoints are flat lines
  if (hi - lo <= Math.max(Math.abs(lo), Math.abs(hi)) * 1e-9) {
    lo -= 0.5
    hi += 0.5
  }
  const pad = (hi - lo) * padFraction
  return [lo - pad, hi + pad]
}

export function ticks(lo: number, hi: number, n = 6): number[] {
  const rawStep = (hi - lo) / Math.max(n, 1)
  const mag = Math.pow(10, Math.floor(Math.log10(rawStep)))
  const step = [1, 2, 5, 10].map(m => m * mag).find(s => (hi - lo) / s <= n) ?? mag * 10
  const start = Math.ceil(lo / step) * step
  if (start + step === start) return [lo, hi] // step below endpoint resolution
  const out: number[] = []
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    out.push(Math.abs(v) < step * 1e-9 ? 0 : v)
  }
  return out
}

export function logTicks(lo: number, hi: number): number[] {
  const out: number[] = []
  for (let e = Math.ceil(Math.log10(lo)); e <= Math.floor(Math.log10(hi)); e++) {
    out.push(Math.pow(10, e))
  }
  return out.length >= 2 ? out : [lo, hi]
}

function fmt(v: number): string {
  if (v === 0) return '0'
  const a = Math.abs(v)
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1)
  return String(Math.round(v * 1e6) / 1e6)
}

const esc = (s: string) =>
  s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;')

export class Figure {
  private parts: string[] = []

  constructor(
    readonly x: Scale,
    readonly y: Scale,
    title: string,
    xLabel: string,
    yLabel: string,
  ) {
    this.parts.push(
      `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
      `<text x="${WIDTH / 2}" y="20" text-anchor="middle" font-size="15" ` +
        `font-family="sans-serif">${esc(title)}</text>`,
    )
    this.axes(xLabel, yLabel)
  }

  private axes(xLabel: string, yLabel: string): void {
    const { left, bottom, top, right } = MARGIN
    const x0 = left
    const x1 = WIDTH - right
    const y0 = HEIGHT - bottom
    const y1 = top
    this.parts.push(
      `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="black"/>`,
      `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="black"/>`,
    )
    const xt = this.x.log
      ? logTicks(this.x.domain[0], this.x.domain[1])
      : ticks(this.x.domain[0], this.x.domain[1])
    for (const t of xt) {
      const px = this.x(t)
      this.parts.push(
        `<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="black"/>`,
        `<text x="${px}" y="${y0 + 18}" text-anchor="middle" font-size="11" ` +
          `font-family="sans-serif">${fmt(t)}</text>`,
      )
    }
    const yt = this.y.log
      ? logTicks(this.y.domain[0], this.y.domain[1])
      : ticks(this.y.domain[0], this.y.domain[1])
    for (const t of yt) {
      const py = this.y(t)
      this.parts.push(
        `<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="black"/>`,
        `<text x="${x0 - 8}" y="${py + 4}" text-anchor="end" font-size="11" ` +
          `font-family="sans-serif">${fmt(t)}</text>`,
      )
    }
    this.parts.push(
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 12}" text-anchor="middle" ` +
        `font-size="13" font-family="sans-serif">${esc(xLabel)}</text>`,
      `<text x="18" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="13" ` +
        `font-family="sans-serif" transform="rotate(-90 18 ${(y0 + y1) / 2})">` +
        `${esc(yLabel)}</text>`,
    )
  }

  polyline(xs: number[], ys: number[], stroke: string, cls: string, dash = ''): void {
    const pts = xs
      .map((v, i) => `${this.x(v).toFixed(2)},${this.y(ys[i]).toFixed(2)}`)
      .join(' ')
    const dashAttr = dash ? ` stroke-dasharray="${dash}"` : ''
    this.parts.push(
      `<polyline class="${cls}" points="${pts}" fill="none" ` +
        `stroke="${stroke}" stroke-width="1.5"${dashAttr}/>`,
    )
  }

  points(xs: number[], ys: number[], fill: string, cls: string, r = 3): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle class="${cls}" cx="${this.x(xs[i]).toFixed(2)}" ` +
          `cy="${this.y(ys[i]).toFixed(2)}" r="${r}" fill="${fill}"/>`,
      )
    }
  }

  bars(xs: number[], ys: number[], width: number, fill: string, cls: string): void {
    const yBase = this.y(Math.max(this.y.domain[0], 0))
    for (let i = 0; i < xs.length; i++) {
      const px = this.x(xs[i])
      const py = this.y(ys[i])
      const h = Math.abs(yBase - py)
      this.parts.push(
        `<rect class="${cls}" x="${(px - width / 2).toFixed(2)}" ` +
          `y="${Math.min(py, yBase).toFixed(2)}" width="${width.toFixed(2)}" ` +
          `height="${h.toFixed(2)}" fill="${fill}"/>`,
      )
    }
  }

  band(xs: number[], lows: number[], highs: number[], fill: string, cls: string): void {
    const fwd = xs.map((v, i) => `${this.x(v).toFixed(2)},${this.y(highs[i]).toFixed(2)}`)
    const back = [...xs]
      .reverse()
      .map((v, i) => `${this.x(v).toFixed(2)},${this.y(lows[xs.length - 1 - i]).toFixed(2)}`)
    this.parts.push(
      `<polygon class="${cls}" points="${[...fwd, ...back].join(' ')}" ` +
        `fill="${fill}" opacity="0.25"/>`,
    )
  }

  hline(yValue: number, stroke: string, cls: string): void {
    const py = this.y(yValue)
    this.parts.push(
      `<line class="${cls}" x1="${MARGIN.left}" y1="${py.toFixed(2)}" ` +
        `x2="${WIDTH - MARGIN.right}" y2="${py.toFixed(2)}" stroke="${stroke}" ` +
        `stroke-dasharray="4 3"/>`,
    )
  }

  cell(x0: number, x1: number, y0: number, y1: number, fill: string): void {
    const px = Math.min(this.x(x0), this.x(x1))
    const py = Math.min(this.y(y0), this.y(y1))
    const w = Math.abs(this.x(x1) - this.x(x0))
    const h = Math.abs(this.y(y1) - this.y(y0))
    this.parts.push(
      `<rect class="cell" x="${px.toFixed(2)}" y="${py.toFixed(2)}" ` +
        `width="${w.toFixed(2)}" height="${h.toFixed(2)}" fill="${fill}"/>`,
    )
  }

  note(text: string, line = 0): void {
    this.parts.push(
      `<text class="note" x="${WIDTH - MARGIN.right}" y="${MARGIN.top + 14 + 16 * line}" ` +
        `text-anchor="end" font-size="12" font-family="sans-serif">${esc(text)}</text>`,
    )
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" ` +
      `height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">` +
      this.parts.join('') +
      '</svg>'
    )
  }
}

export function plotArea(): { xRange: [number, number]; yRange: [number, number] } {
  return {
    xRange: [MARGIN.left, WIDTH - MARGIN.right],
    yRange: [HEIGHT - MARGIN.bottom, MARGIN.top],
  }
}

/** Greyscale colour for a unit-interval value. */
export function grey(t: number): string {
  const v = Math.round(255 * (1 - Math.min(1, Math.max(0, t))))
  return `rgb(${v},${v},${255 - Math.round((255 - v) / 2)})`
}
