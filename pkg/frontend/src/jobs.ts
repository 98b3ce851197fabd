import type { ApiClient } from './api'
import type { HistoryLine, JobSnapshot } from './types'

const TERMINAL = new Set(['done', 'failed', 'cancelled'])

interface ConsoleHooks {
  onUpdate?: (snapshot: JobSnapshot) => void
  onFinish?: (snapshot: JobSnapshot) => void
}

/**
 * Job launcher with 500 ms progress polling, an append-only history log,
 * and a cancel button. Polling stops on its own once the job settles.
 */
export class JobConsole {
  jobId: string | null = null
  snapshot: JobSnapshot | null = null
  history: HistoryLine[] = []
  private timer: ReturnType<typeof setInterval> | null = null

  constructor(
    private readonly api: ApiClient,
    private readonly hooks: ConsoleHooks = {},
    readonly pollMs = 500
  ) {}

  get polling(): boolean {
    return this.timer !== null
  }

  async launch(session: string, kind: string, params: Record<string, unknown>): Promise<string> {
    if (this.timer) this.stopPolling()
    this.history = []
    this.snapshot = null
    const { job } = await this.api.postJob(session, kind, params)
    this.jobId = job
    this.timer = setInterval(() => void this.poll(), this.pollMs)
    await this.poll()
    return job
  }

  async poll(): Promise<void> {
    if (!this.jobId) return
    const snap = await this.api.getJob(this.jobId)
    // history is append-only server side; keep the longest view we have
    // seen so a stale poll can never shrink the log
    if (snap.history.length >= this.history.length) {
      this.history = snap.history
    }
    this.snapshot = snap
    this.hooks.onUpdate?.(snap)
    if (TERMINAL.has(snap.state)) {
      this.stopPolling()
      this.hooks.onFinish?.(snap)
    }
  }

  async cancel(): Promise<void> {
    if (!this.jobId) return
    await this.api.cancelJob(this.jobId)
    // keep polling; the server flips the state after the current slice
  }

  stopPolling(): void {
    if (this.timer !== null) {
      clearInterval(this.timer)
      this.timer = null
    }
  }
}
