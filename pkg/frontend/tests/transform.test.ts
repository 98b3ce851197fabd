import { describe, expect, it } from 'vitest'

import { ViewTransform } from '../src/transform'

describe('ViewTransform', () => {
  it('reports the same voxel after zooming at the cursor', () => {
    const t = new ViewTransform()
    const before = t.voxelAt(200, 150)
    t.zoomAt(200, 150, 4)
    const after = t.voxelAt(200, 150)
    expect(after).toEqual(before)
  })

  it('zoom then click center reports the pre-zoom voxel', () => {
    const t = new ViewTransform()
    const center: [number, number] = [450, 350]
    const preZoom = t.voxelAt(...center)
    t.zoomAt(center[0], center[1], 4)
    expect(t.voxelAt(...center)).toEqual(preZoom)
    expect(t.scale).toBe(4)
  })

  it('screenToVoxel inverts voxelToScreen', () => {
    const t = new ViewTransform()
    t.zoomAt(100, 80, 2.5)
    t.pan(-40, 13)
    for (const [vx, vy] of [[0, 0], [17, 3], [511, 499], [7.25, 0.5]]) {
      const s = t.voxelToScreen(vx, vy)
      const v = t.screenToVoxel(s.sx, s.sy)
      expect(v.x).toBeCloseTo(vx, 9)
      expect(v.y).toBeCloseTo(vy, 9)
    }
  })

  it('pan shifts the readout by whole voxels at scale 1', () => {
    const t = new ViewTransform()
    const before = t.voxelAt(50, 50)
    t.pan(-10, -20)
    const after = t.voxelAt(50, 50)
    expect(after).toEqual({ x: before.x + 10, y: before.y + 20 })
  })

  it('zooming out then in restores the transform', () => {
    const t = new ViewTransform()
    t.zoomAt(33, 44, 0.5)
    t.zoomAt(33, 44, 2)
    expect(t.scale).toBeCloseTo(1, 12)
    expect(t.offsetX).toBeCloseTo(0, 9)
    expect(t.offsetY).toBeCloseTo(0, 9)
  })
})
