import type { ApiClient } from './api'
import type { PickRow, Roi } from './types'

// class swatches match the server's label palette order
export const CLASS_COLORS = ['#1f77b4', '#2ca02c', '#d62728', '#ff7f0e', '#9467bd', '#8c564b']

export const colorForClass = (classId: number): string =>
  CLASS_COLORS[(classId - 1) % CLASS_COLORS.length]

/**
 * Training-pixel table. Rows hold integer voxel coordinates snapped from
 * the cursor readout; the server remains the source of truth, so after a
 * submit the table re-reads itself from the API instead of trusting its
 * local copy.
 */
export class PickTable {
  rows: PickRow[] = []

  constructor(private readonly api: ApiClient) {}

  /** Append a pick; coordinates snap to integers and must sit in the ROI. */
  add(
    cursor: { x: number; y: number },
    slice: number,
    classId: number,
    featureName: string,
    roi: Roi | null = null
  ): PickRow {
    const x = Math.round(cursor.x)
    const y = Math.round(cursor.y)
    const z = Math.round(slice)
    if (roi) {
      const inside =
        x >= roi.x0 && x < roi.x0 + roi.dx &&
        y >= roi.y0 && y < roi.y0 + roi.dy &&
        z >= roi.z0 && z < roi.z0 + roi.dz
      if (!inside) {
        throw new Error(`pick (${x},${y},z=${z}) lies outside the current ROI`)
      }
    }
    const row: PickRow = {
      class_id: classId,
      feature_name: featureName,
      x,
      y,
      slice: z,
      color: colorForClass(classId)
    }
    this.rows.push(row)
    return row
  }

  remove(index: number): void {
    this.rows.splice(index, 1)
  }

  /** PUT the table, then replace local rows with the server's echo. */
  async submit(session: string): Promise<PickRow[]> {
    const payload = this.rows.map(({ color: _color, ...rest }) => rest)
    await this.api.putTrainingTable(session, payload)
    return this.refresh(session)
  }

  async refresh(session: string): Promise<PickRow[]> {
    const { rows } = await this.api.getTrainingTable(session)
    this.rows = rows.map((r) => ({ ...r, color: colorForClass(r.class_id) }))
    return this.rows
  }
}
