import { describe, expect, it } from 'vitest'

import { parseCsv } from '../src/csv.js'
import { expFit, render } from '../src/figures.js'

function polylinePoints(svg: string, cls: string): Array<[number, number]> {
  const m = svg.match(new RegExp(`<polyline class="${cls}" points="([^"]*)"`))
  expect(m, `polyline ${cls} present`).not.toBeNull()
  return m![1].split(' ').map(pair => {
    const [x, y] = pair.split(',').map(Number)
    return [x, y]
  })
}

describe('expFit', () => {
  it('recovers an exact exponential', () => {
    const t = [0.5, 1, 1.5, 2, 2.5]
    const y = t.map(v => 2.0 * Math.exp(-1.0 * v))
    const fit = expFit(t, y)!
    expect(fit.rate).toBeCloseTo(1.0, 10)
    expect(fit.c).toBeCloseTo(2.0, 10)
  })

  it('ignores non-positive values and degenerate inputs', () => {
    expect(expFit([1, 2], [0, -1])).toBeNull()
    expect(expFit([1, 1], [2, 3])).toBeNull()
  })
})

describe('lambda-trace figure', () => {
  it('renders a constant trace as a flat line', () => {
    const csv = 'alpha,lambda,gap\n0.5,1.0,nan\n0.25,1.0,0.0\n0.1,1.0,0.0\n'
    const svg = render('lambda-trace', parseCsv(csv), 'constant driver')
    const pts = polylinePoints(svg, 'trace')
    const ys = new Set(pts.map(([, y]) => y))
    expect(ys.size).toBe(1)
    expect(svg).toContain('final rung gap')
  })

  it('handles traces flat to within one ulp without hanging', () => {
    const csv =
      'alpha,lambda,gap\n0.5,1.0,nan\n0.25,1.0000000000000002,0.0\n0.1,1.0,0.0\n'
    const svg = render('lambda-trace', parseCsv(csv), 'ulp-flat')
    expect(svg).toContain('class="trace"')
  })

  it('shows the rung gaps in the annotation', () => {
    const csv = 'alpha,lambda,gap\n0.5,0.9,nan\n0.25,0.95,0.05\n0.1,0.96,0.01\n'
    const svg = render('lambda-trace', parseCsv(csv), 't')
    expect(svg).toMatch(/final rung gap 1\.00e-2/)
    expect(svg).toMatch(/max rung gap 5\.00e-2/)
  })
})

describe('tv-decay figure', () => {
  it('overlays the fitted exponential with the stated rate', () => {
    const t = [0.5, 1, 1.5, 2, 2.5, 3]
    const rows = t.map(v => `${v},${0.8 * Math.exp(-1.0 * v)},0.001`).join('\n')
    const svg = render('tv-decay', parseCsv(`t,tv_estimate,se\n${rows}\n`), 'ou')
    expect(svg).toContain('class="fit"')
    expect(svg).toMatch(/fit 0\.800 exp\(-1\.000 t\)/)
    // on the log axis an exact exponential's fit passes through the data
    const fit = polylinePoints(svg, 'fit')
    expect(fit.length).toBe(t.length)
  })

  it('rejects an all-zero trace instead of drawing an empty log plot', () => {
    const csv = 't,tv_estimate,se\n1,0,0.001\n2,0,0.001\n'
    expect(() => render('tv-decay', parseCsv(csv), 't')).toThrow(/every estimate is zero/)
  })
})

describe('histogram and cdf figures', () => {
  it('draws one bar per meeting-time bin', () => {
    const csv = 'k,count\n0,5\n1,10\n2,3\n3,0\n'
    const svg = render('meeting-times', parseCsv(csv), 'mt')
    expect(svg.match(/<rect class="bar"/g)?.length).toBe(4)
  })

  it('draws the hitting CDF with its confidence band', () => {
    const csv =
      'T,hit_prob,ci_low,ci_high\n1,0.2,0.15,0.25\n2,0.6,0.55,0.65\n5,0.99,0.97,1.0\n'
    const svg = render('hitting-cdf', parseCsv(csv), 'h')
    expect(svg).toContain('class="ci"')
    const pts = polylinePoints(svg, 'cdf')
    // nondecreasing probabilities render as nonincreasing pixel y
    for (let i = 1; i < pts.length; i++) {
      expect(pts[i][1]).toBeLessThanOrEqual(pts[i - 1][1] + 1e-9)
    }
  })
})

describe('policy-costs figure', () => {
  it('marks lambda_bar derived from the first row', () => {
    const csv =
      'policy_id,J,se,gap_vs_lambda\noptimal,0.50,0.01,0.002\nconstant[0],0.7,0.01,0.202\n'
    const svg = render('policy-costs', parseCsv(csv), 'pc')
    expect(svg).toContain('class="lambda-bar"')
    expect(svg).toMatch(/lambda_bar = 0\.4980/)
    expect(svg.match(/<rect class="bar"/g)?.length).toBe(2)
  })
})

describe('trajectory and value figures', () => {
  it('draws one polyline per path', () => {
    const csv =
      'path,t,x_1\n0,0,0.0\n0,0.5,0.1\n1,0,0.2\n1,0.5,0.3\n'
    const svg = render('trajectories', parseCsv(csv), 'tr')
    expect(svg).toContain('class="path-0"')
    expect(svg).toContain('class="path-1"')
  })

  it('renders a 1-D value curve and a 2-D heat map', () => {
    const svg1 = render('v-bar', parseCsv('x_1,v\n-1,1\n0,0\n1,1\n'), 'v')
    expect(svg1).toContain('class="value"')
    const rows: string[] = []
    for (const x of [-1, 0, 1]) for (const y of [-1, 0, 1]) rows.push(`${x},${y},${x * x + y * y}`)
    const svg2 = render('value', parseCsv(`x_1,x_2,v\n${rows.join('\n')}\n`), 'v2')
    expect(svg2.match(/<rect class="cell"/g)?.length).toBe(9)
  })
})
