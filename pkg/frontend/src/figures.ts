/** One renderer per report kind; each takes a parsed+validated table and
 * returns SVG markup.  Rendering is read-only: tables are never reordered
 * or mutated, rows are drawn in file order.
 */

import { column, textColumn, type Table } from './csv.js'
import { validateSchema } from './schemas.js'
import { Figure, extent, grey, linearScale, logScale, plotArea } from './svg.js'

export type Renderer = (table: Table, title: string) => string

/** Least-squares line a + b t through (t, log y) over the positive ys. */
export function expFit(ts: number[], ys: number[]): { c: number; rate: number } | null {
  const pts = ts
    .map((t, i) => [t, ys[i]] as const)
    .filter(([, y]) => y > 0)
  if (pts.length < 2) return null
  const xs = pts.map(([t]) => t)
  const ls = pts.map(([, y]) => Math.log(y))
  const n = xs.length
  const mx = xs.reduce((a, b) => a + b, 0) / n
  const my = ls.reduce((a, b) => a + b, 0) / n
  let sxx = 0
  let sxy = 0
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - mx) ** 2
    sxy += (xs[i] - mx) * (ls[i] - my)
  }
  if (sxx === 0) return null
  const b = sxy / sxx
  return { c: Math.exp(my - b * mx), rate: -b }
}

const { xRange, yRange } = plotArea()

function lambdaTrace(table: Table, title: string): string {
  const alpha = column(table, 'alpha')
  const lambda = column(table, 'lambda')
  const gap = column(table, 'gap', true)
  const fig = new Figure(
    logScale(extent(alpha, 0).map((v, i) => (i === 0 ? v * 0.8 : v * 1.25)) as [number, number], xRange),
    linearScale(extent(lambda, 0.15), yRange),
    title,
    'discount alpha (log)',
    'lambda_alpha',
  )
  fig.polyline(alpha, lambda, '#1f77b4', 'trace')
  fig.points(alpha, lambda, '#1f77b4', 'trace-pt')
  const finiteGaps = gap.filter(Number.isFinite)
  if (finiteGaps.length > 0) {
    fig.note(`final rung gap ${finiteGaps[finiteGaps.length - 1].toExponential(2)}`)
    fig.note(`max rung gap ${Math.max(...finiteGaps).toExponential(2)}`, 1)
  }
  return fig.render()
}

function tvDecay(table: Table, title: string): string {
  const t = column(table, 't')
  const tv = column(table, 'tv_estimate')
  const positive = tv.filter(v => v > 0)
  if (positive.length === 0) {
    throw new Error('tv-decay: every estimate is zero; nothing to draw on a log axis')
  }
  const floor = Math.min(...positive)
  const shown = tv.map(v => Math.max(v, floor))
  const fig = new Figure(
    linearScale(extent(t), xRange),
    logScale([floor * 0.5, Math.max(...tv) * 2], yRange),
    title,
    't',
    'TV estimate (log)',
  )
  fig.points(t, shown, '#1f77b4', 'estimate')
  const fit = expFit(t, tv)
  if (fit) {
    const ys = t.map(v => Math.max(fit.c * Math.exp(-fit.rate * v), floor * 0.5))
    fig.polyline(t, ys, '#d62728', 'fit', '5 3')
    fig.note(`fit ${fit.c.toFixed(3)} exp(-${fit.rate.toFixed(3)} t)`)
  }
  return fig.render()
}

function meetingTimes(table: Table, title: string): string {
  const k = column(table, 'k')
  const count = column(table, 'count')
  const fig = new Figure(
    linearScale([Math.min(...k) - 0.5, Math.max(...k) + 0.5], xRange),
    linearScale([0, Math.max(...count, 1) * 1.1], yRange),
    title,
    'meeting time (periods k)',
    'replicas',
  )
  const barWidth = (xRange[1] - xRange[0]) / k.length * 0.85
  fig.bars(k, count, barWidth, '#1f77b4', 'bar')
  return fig.render()
}

function metFraction(table: Table, title: string): string {
  const k = column(table, 'k')
  const frac = column(table, 'met_fraction')
  const fig = new Figure(
    linearScale(extent(k, 0.02), xRange),
    linearScale([0, 1.05], yRange),
    title,
    'periods k',
    'met fraction',
  )
  fig.polyline(k, frac, '#1f77b4', 'trace')
  fig.points(k, frac, '#1f77b4', 'trace-pt', 2)
  return fig.render()
}

function hittingCdf(table: Table, title: string): string {
  const T = column(table, 'T')
  const p = column(table, 'hit_prob')
  const lo = column(table, 'ci_low')
  const hi = column(table, 'ci_high')
  const fig = new Figure(
    linearScale(extent(T, 0.02), xRange),
    linearScale([0, 1.05], yRange),
    title,
    'horizon T',
    'P(tau < T)',
  )
  fig.band(T, lo, hi, '#1f77b4', 'ci')
  fig.polyline(T, p, '#1f77b4', 'cdf')
  fig.points(T, p, '#1f77b4', 'cdf-pt')
  return fig.render()
}

function policyCosts(table: Table, title: string): string {
  const ids = textColumn(table, 'policy_id')
  const J = column(table, 'J')
  const gap = column(table, 'gap_vs_lambda')
  const lambdaBar = J[0] - gap[0]
  const xs = ids.map((_, i) => i)
  const fig = new Figure(
    linearScale([-0.6, ids.length - 0.4], xRange),
    linearScale(extent([...J, lambdaBar, 0], 0.1), yRange),
    title,
    'policy index (see note)',
    'ergodic cost J',
  )
  const barWidth = (xRange[1] - xRange[0]) / ids.length * 0.7
  fig.bars(xs, J, barWidth, '#1f77b4', 'bar')
  fig.hline(lambdaBar, '#d62728', 'lambda-bar')
  fig.note(`lambda_bar = ${lambdaBar.toFixed(4)}`)
  ids.forEach((id, i) => fig.note(`${i}: ${id}`, i + 1))
  return fig.render()
}

function trajectories(table: Table, title: string): string {
  const path = column(table, 'path')
  const t = column(table, 't')
  const x1 = column(table, 'x_1')
  const fig = new Figure(
    linearScale(extent(t, 0.02), xRange),
    linearScale(extent(x1, 0.1), yRange),
    title,
    't',
    'x_1',
  )
  const ids = [...new Set(path)]
  ids.forEach((id, j) => {
    const idx = path.map((p, i) => (p === id ? i : -1)).filter(i => i >= 0)
    const hue = Math.round((360 * j) / Math.max(ids.length, 1))
    fig.polyline(
      idx.map(i => t[i]),
      idx.map(i => x1[i]),
      `hsl(${hue},60%,45%)`,
      `path-${id}`,
    )
  })
  return fig.render()
}

function valueSurface(table: Table, title: string): string {
  const coordCols = table.header.filter(c => /^x_\d+$/.test(c))
  const v = column(table, 'v')
  if (coordCols.length === 1) {
    const x = column(table, 'x_1')
    const fig = new Figure(
      linearScale(extent(x, 0.02), xRange),
      linearScale(extent(v, 0.1), yRange),
      title,
      'x_1',
      'v',
    )
    fig.polyline(x, v, '#1f77b4', 'value')
    return fig.render()
  }
  if (coordCols.length !== 2) {
    throw new Error(`value surfaces support 1 or 2 coordinates, got ${coordCols.length}`)
  }
  const x = column(table, 'x_1')
  const y = column(table, 'x_2')
  const xs = [...new Set(x)].sort((a, b) => a - b)
  const ys = [...new Set(y)].sort((a, b) => a - b)
  const dx = xs.length > 1 ? xs[1] - xs[0] : 1
  const dy = ys.length > 1 ? ys[1] - ys[0] : 1
  const [vLo, vHi] = [Math.min(...v), Math.max(...v)]
  const span = vHi - vLo || 1
  const fig = new Figure(
    linearScale([xs[0] - dx / 2, xs[xs.length - 1] + dx / 2], xRange),
    linearScale([ys[0] - dy / 2, ys[ys.length - 1] + dy / 2], yRange),
    title,
    'x_1',
    'x_2',
  )
  for (let i = 0; i < v.length; i++) {
    fig.cell(x[i] - dx / 2, x[i] + dx / 2, y[i] - dy / 2, y[i] + dy / 2,
      grey((v[i] - vLo) / span))
  }
  fig.note(`v in [${vLo.toFixed(3)}, ${vHi.toFixed(3)}]`)
  return fig.render()
}

const RENDERERS: Record<string, Renderer> = {
  'lambda-trace': lambdaTrace,
  'tv-decay': tvDecay,
  'meeting-times': meetingTimes,
  'met-fraction': metFraction,
  'hitting-cdf': hittingCdf,
  'policy-costs': policyCosts,
  trajectories,
  value: valueSurface,
  'v-bar': valueSurface,
}

export function render(kind: string, table: Table, title: string): string {
  validateSchema(kind, table)
  const renderer = RENDERERS[kind]
  if (!renderer) {
    throw new Error(`no renderer for kind ${kind}`)
  }
  return renderer(table, title)
}
