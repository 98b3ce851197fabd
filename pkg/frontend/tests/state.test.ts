import { describe, expect, it } from 'vitest'

import { AppState, sessionFromUrl, writeSessionToUrl } from '../src/state'

describe('session persistence', () => {
  it('parses the session from a query string', () => {
    expect(sessionFromUrl('?session=abc123')).toBe('abc123')
    expect(sessionFromUrl('?other=1')).toBeNull()
  })

  it('survives a reload via the URL', () => {
    writeSessionToUrl('deadbeef01')
    expect(window.location.search).toContain('session=deadbeef01')
    expect(sessionFromUrl()).toBe('deadbeef01')
  })
})

describe('AppState', () => {
  it('clamps slice indices to the stack', () => {
    const s = new AppState()
    s.geometry = { nx: 4, ny: 4, nz: 10, bit_depth: 16, voxel_size: 1 }
    expect(s.clampZ(-3)).toBe(0)
    expect(s.clampZ(4.6)).toBe(5)
    expect(s.clampZ(99)).toBe(9)
  })

  it('rejects inverted display windows', () => {
    const s = new AppState()
    expect(() => s.setWindow(100, 100)).toThrow(/lo < hi/)
    s.setWindow(0, 4096)
    expect(s.view.window).toEqual([0, 4096])
  })
})
