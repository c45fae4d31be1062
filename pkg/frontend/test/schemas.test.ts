import { describe, expect, it } from 'vitest'

import { parseCsv } from '../src/csv.js'
import { SchemaError, figureKinds, validateSchema } from '../src/schemas.js'

describe('validateSchema', () => {
  it('accepts matching headers for every kind', () => {
    const samples: Record<string, string> = {
      'lambda-trace': 'alpha,lambda,gap\n0.5,1,nan\n',
      'tv-decay': 't,tv_estimate,se\n0.5,0.1,0.01\n',
      'meeting-times': 'k,count\n0,10\n',
      'met-fraction': 'k,met_fraction\n0,0.0\n',
      'hitting-cdf': 'T,hit_prob,ci_low,ci_high\n1,0.5,0.4,0.6\n',
      'policy-costs': 'policy_id,J,se,gap_vs_lambda\nopt,0.5,0.01,0.0\n',
      trajectories: 'path,t,x_1,x_2\n0,0.0,0.1,0.2\n',
      value: 'x_1,x_2,v\n0,0,1\n',
      'v-bar': 'x_1,v\n0,1\n',
    }
    for (const kind of figureKinds()) {
      expect(samples[kind], `sample for ${kind}`).toBeDefined()
      expect(() => validateSchema(kind, parseCsv(samples[kind]))).not.toThrow()
    }
  })

  it('reports missing columns in the diff', () => {
    const t = parseCsv('alpha,lambda\n0.5,1\n')
    expect(() => validateSchema('lambda-trace', t)).toThrow(/missing columns: gap/)
  })

  it('reports unexpected columns in the diff', () => {
    const t = parseCsv('alpha,lambda,gap,extra\n0.5,1,nan,2\n')
    expect(() => validateSchema('lambda-trace', t)).toThrow(
      /unexpected columns: extra/,
    )
  })

  it('rejects wrong column order', () => {
    const t = parseCsv('lambda,alpha,gap\n1,0.5,nan\n')
    expect(() => validateSchema('lambda-trace', t)).toThrow(SchemaError)
  })

  it('requires the trailing value column', () => {
    const t = parseCsv('x_1,x_2\n0,0\n')
    expect(() => validateSchema('value', t)).toThrow(/missing columns: v/)
  })

  it('rejects an unknown kind with the known list', () => {
    const t = parseCsv('a\n1\n')
    expect(() => validateSchema('pie-chart', t)).toThrow(/unknown figure kind/)
  })
})
