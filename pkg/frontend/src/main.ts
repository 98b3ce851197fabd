import { ApiClient } from './api'
import { buildFractionsView, buildPsdView, buildTrendView, drawBars, drawTrend } from './charts'
import { JobConsole } from './jobs'
import { PickTable } from './picks'
import { RoiTool } from './roiTool'
import { AppState, sessionFromUrl, writeSessionToUrl } from './state'
import type { FractionsMetrics, PsdMetrics, TrendMetrics } from './types'
import { SliceViewer } from './viewer'

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing element #${id}`)
  return el as T
}

const api = new ApiClient('')
const state = new AppState()
let viewer: SliceViewer
let picks: PickTable
let roiTool: RoiTool | null = null

const status = (line: string) => {
  const log = $('history')
  const div = document.createElement('div')
  div.textContent = `${new Date().toLocaleTimeString()}  ${line}`
  log.appendChild(div)
  log.scrollTop = log.scrollHeight
}

const refreshPickList = () => {
  const list = $('pick-rows')
  list.innerHTML = ''
  picks.rows.forEach((r, i) => {
    const li = document.createElement('li')
    const swatch = document.createElement('span')
    swatch.className = 'swatch'
    swatch.style.background = r.color
    li.appendChild(swatch)
    li.appendChild(
      document.createTextNode(` c${r.class_id} ${r.feature_name} (${r.x}, ${r.y}, z=${r.slice}) `)
    )
    const del = document.createElement('button')
    del.textContent = 'x'
    del.onclick = () => {
      picks.remove(i)
      refreshPickList()
    }
    li.appendChild(del)
    list.appendChild(li)
  })
}

const loadVolume = async () => {
  const body = {
    format: 'raw',
    path: ($('vol-path') as HTMLInputElement).value,
    nx: Number(($('vol-nx') as HTMLInputElement).value),
    ny: Number(($('vol-ny') as HTMLInputElement).value),
    nz: Number(($('vol-nz') as HTMLInputElement).value),
    bit_depth: Number(($('vol-depth') as HTMLInputElement).value),
    voxel_size: Number(($('vol-size') as HTMLInputElement).value) || 1.0
  }
  const { session, geometry } = await api.registerVolume(body)
  state.session = session
  state.geometry = geometry
  writeSessionToUrl(session)
  roiTool = new RoiTool(api, geometry)
  const zInput = $('z') as HTMLInputElement
  zInput.max = String(geometry.nz - 1)
  status(`volume loaded: ${geometry.nx}x${geometry.ny}x${geometry.nz} (session ${session})`)
  await viewer.refresh()
}

const launchJob = async (kind: string, params: Record<string, unknown>) => {
  if (!state.session) return status('load a volume first')
  const console_ = new JobConsole(api, {
    onUpdate: (s) => {
      ;($('progress') as HTMLProgressElement).value = s.progress
      const latest = s.history[s.history.length - 1]
      if (latest) $('job-state').textContent = `${s.state}: ${latest.line}`
    },
    onFinish: async (s) => {
      status(`job ${s.id} ${s.state}${s.error ? `: ${s.error}` : ''}`)
      if (s.state === 'done') await viewer.refresh()
    }
  })
  activeConsole = console_
  const id = await console_.launch(state.session, kind, params)
  status(`launched ${kind} job ${id}`)
}

let activeConsole: JobConsole | null = null

const showCharts = async () => {
  if (!state.session) return
  const labels = ($('metric-labels') as HTMLInputElement).value || 'labels'
  const pore = ($('pore-class') as HTMLInputElement).value || '1'
  const trend = await api.getMetrics<TrendMetrics>(state.session, labels, 'trend', { pore_class: pore })
  drawTrend(($('chart-trend') as HTMLCanvasElement).getContext('2d')!, buildTrendView(trend))
  const psd = await api.getMetrics<PsdMetrics>(state.session, labels, 'psd', { pore_class: pore })
  const psdView = buildPsdView(psd)
  if (psdView.empty) status(psdView.message)
  drawBars(($('chart-psd') as HTMLCanvasElement).getContext('2d')!, psdView.bars, psdView.summaryLabel)
  const fr = await api.getMetrics<FractionsMetrics>(state.session, labels, 'fractions')
  const frView = buildFractionsView(fr)
  drawBars(($('chart-fractions') as HTMLCanvasElement).getContext('2d')!, frView.bars, 'volume fractions')
  $('csv-trend').setAttribute('href', api.exportUrl(state.session, `${labels}_trend`, 'csv'))
}

export const boot = (): void => {
  picks = new PickTable(api)
  viewer = new SliceViewer($('view') as HTMLCanvasElement, api, state, {
    onCursor: (v) => {
      $('cursor').textContent = `(${v.x}, ${v.y}) z=${state.view.z}`
    },
    onPick: (v) => {
      try {
        picks.add(
          v,
          state.view.z,
          Number(($('pick-class') as HTMLInputElement).value),
          ($('pick-feature') as HTMLInputElement).value,
          roiTool?.applied ?? null
        )
        refreshPickList()
      } catch (err) {
        status(String(err))
      }
    },
    onRoiDrag: (phase, v) => {
      if (!roiTool) return
      if (phase === 'begin') roiTool.begin(v)
      else if (phase === 'update') roiTool.update(v)
      else {
        const draft = roiTool.end()
        if (draft) $('roi-draft').textContent = JSON.stringify(draft)
      }
    }
  })

  $('load').onclick = () => void loadVolume().catch((e) => status(String(e)))
  $('mode-pan').onclick = () => (viewer.mode = 'pan')
  $('mode-pick').onclick = () => (viewer.mode = 'pick')
  $('mode-roi').onclick = () => (viewer.mode = 'roi')
  ;($('z') as HTMLInputElement).oninput = (e) => {
    state.view.z = state.clampZ(Number((e.target as HTMLInputElement).value))
    void viewer.refresh()
  }
  $('layer').onchange = (e) => {
    state.view.layer = (e.target as HTMLSelectElement).value as typeof state.view.layer
    void viewer.refresh()
  }
  $('apply-window').onclick = () => {
    try {
      state.setWindow(
        Number(($('win-lo') as HTMLInputElement).value),
        Number(($('win-hi') as HTMLInputElement).value)
      )
      void viewer.refresh()
    } catch (err) {
      status(String(err))
    }
  }
  $('roi-commit').onclick = () =>
    void roiTool
      ?.commit(state.session!)
      .then((roi) => {
        state.roi = roi
        $('roi-applied').textContent = JSON.stringify(roi)
        status(`ROI applied: ${JSON.stringify(roi)}`)
      })
      .catch((e) => status(String(e)))
  $('picks-submit').onclick = () =>
    void picks
      .submit(state.session!)
      .then((rows) => {
        refreshPickList()
        status(`training table stored (${rows.length} rows)`)
      })
      .catch((e) => status(String(e)))
  $('run-filter').onclick = () =>
    void launchJob('filter', {
      method: ($('filter-method') as HTMLSelectElement).value,
      search_window: Number(($('nlm-window') as HTMLInputElement).value),
      neighborhood: Number(($('nlm-neigh') as HTMLInputElement).value),
      similarity: Number(($('nlm-sim') as HTMLInputElement).value),
      threshold: Number(($('ad-threshold') as HTMLInputElement).value),
      iterations: Number(($('ad-iters') as HTMLInputElement).value)
    })
  $('run-segment').onclick = () =>
    void launchJob('segment', {
      method: ($('seg-method') as HTMLSelectElement).value,
      k: Number(($('seg-k') as HTMLInputElement).value),
      c: Number(($('seg-k') as HTMLInputElement).value),
      m: Number(($('fcm-m') as HTMLInputElement).value),
      distance: ($('seg-distance') as HTMLSelectElement).value,
      restarts: 5,
      source: ($('seg-source') as HTMLSelectElement).value
    })
  $('run-classify').onclick = () =>
    void launchJob('classify', {
      model: ($('clf-model') as HTMLSelectElement).value,
      gamma: Number(($('clf-gamma') as HTMLInputElement).value),
      sigma2: Number(($('clf-sigma2') as HTMLInputElement).value)
    })
  $('cancel-job').onclick = () => void activeConsole?.cancel()
  $('show-charts').onclick = () => void showCharts().catch((e) => status(String(e)))

  const existing = sessionFromUrl()
  if (existing) {
    state.session = existing
    status(`resumed session ${existing}`)
  }
}

if (typeof document !== 'undefined' && document.getElementById('view')) {
  boot()
}
