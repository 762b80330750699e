/**
 * Single-annotator session state. No shared mutable state beyond this
 * object; one instance per browser tab.
 *
 * The service's next-task endpoint always returns the first unfinished
 * assignment, so the next task can only be known after a submission is
 * acknowledged; the optimistic part of the flow is image preloading
 * (see app.ts), not task prefetching.
 */

import type { ApiClient } from "./api.js";
import type { AnnotationPayload, NextTaskResponse, SubmitAck, Task } from "./types.js";

export class AnnotationSession {
  private current: Task | null = null;
  private finished = false;

  constructor(
    private readonly client: ApiClient,
    readonly annotatorId: string,
  ) {}

  get currentTask(): Task | null {
    return this.current;
  }

  get done(): boolean {
    return this.finished;
  }

  /** Load the first task (or the completion state). */
  async start(): Promise<Task | null> {
    return this.accept(await this.client.nextTask(this.annotatorId));
  }

  private accept(response: NextTaskResponse): Task | null {
    if (response.done || !response.task) {
      this.finished = true;
      this.current = null;
      return null;
    }
    this.current = response.task;
    return this.current;
  }

  /**
   * Submit the current task's annotation, then advance to the next task.
   * On a rejected submission the error propagates and the current task is
   * kept, so unsent form state survives for correction and retry.
   */
  async submitAndAdvance(
    payload: AnnotationPayload,
  ): Promise<{ ack: SubmitAck; task: Task | null }> {
    if (!this.current) throw new Error("no active task");
    if (payload.address_id !== this.current.address_id) {
      throw new Error("payload does not match the active task");
    }
    const ack = await this.client.submit(payload);
    const task = this.accept(await this.client.nextTask(this.annotatorId));
    return { ack, task };
  }
}
